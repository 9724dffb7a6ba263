"""Exception types shared across the simulator.

ConfigError and its subclasses mean the input (config file, trace file,
obstacle file, parameter value) was rejected; the CLI maps them to exit
code 1.  SimulationError and its subclasses mean a run failed after the
input was accepted; the CLI maps them to exit code 2.
"""


class VanetSimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VanetSimError):
    """Invalid configuration or input file."""


class TraceParseError(ConfigError):
    """A mobility trace file was rejected; the message names the spot."""


class SchedulingError(ConfigError):
    """An event was scheduled before the current simulation clock."""


class SimulationError(VanetSimError):
    """A run failed at simulation time."""


class BudgetError(SimulationError):
    """The engine hit its event budget before reaching the horizon."""


class MaintenanceError(SimulationError):
    """Fog cell maintenance did not reach a consistent fixed point."""
