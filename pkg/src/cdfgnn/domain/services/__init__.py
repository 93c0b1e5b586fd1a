"""Pure computational services of the simulator."""
