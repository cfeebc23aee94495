import subprocess
import sys
import time

import pytest


@pytest.fixture(scope="session")
def server_address():
    """A real evaluation server in a child process, shared by the session."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "dynahoi.cli", "serve", "--bind", "127.0.0.1:0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    address = None
    deadline = time.time() + 20
    try:
        while time.time() < deadline:
            line = proc.stdout.readline()
            if not line:
                break
            if line.startswith("listening on "):
                address = line.split()[-1].strip()
                break
        if address is None:
            raise RuntimeError("server never reported its address")
        yield address
    finally:
        proc.terminate()
        proc.wait(timeout=10)
