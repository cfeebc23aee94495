"""Static data files shipped with the simulator."""
