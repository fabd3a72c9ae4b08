import logging
import numpy as np
import sys

###############################################################################
# ------------------------------- Exceptions -------------------------------- #
###############################################################################


class ShapeError(ValueError):
    """ Raised when matrix dimensions do not conform. """


class InputError(ValueError):
    """ Raised for invalid input data (labels, data matrices, files). """


class ConfigError(ValueError):
    """ Raised for invalid configuration values. """


class DataParseError(InputError):
    """ Raised when a data file cannot be parsed. Carries the offending line number (1-based). """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class NumericalError(ArithmeticError):
    """ Raised when a solver produces a non-finite value. Carries the iteration index. """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


###############################################################################
# ---------------------------- Helper functions ----------------------------- #
###############################################################################

def setup_logger(name, verbosity=1):
    """
    Setup a logger writing to stdout.

    Parameters
    ----------
    name : str
        Name of the logger, usually the class name of the owner.
    verbosity : int, default 1
        The verbosity of the logger. 0: ERROR and WARNINGS, 1: INFO, 2: DEBUG

    Returns
    -------
    logging.Logger
    """

    logger = logging.getLogger(name)
    logger.handlers = []  # remove any existing handlers

    # Test if verbosity is an integer
    try:
        verbosity = int(str(verbosity))  # if verbosity is a bool, converting to str raises an error
    except Exception:
        raise ValueError(f"Verbosity must be an integer - the given value is '{verbosity}'")

    # Setup formatting of handler
    H = logging.StreamHandler(sys.stdout)
    simple_formatter = logging.Formatter("[%(levelname)s] %(message)s")
    debug_formatter = logging.Formatter("[%(levelname)s] [%(name)s:%(funcName)s] %(message)s")

    # Set verbosity and formatting
    if verbosity == 0:
        logger.setLevel(logging.WARNING)
        H.setFormatter(simple_formatter)
    elif verbosity == 1:
        logger.setLevel(logging.INFO)
        H.setFormatter(simple_formatter)
    elif verbosity == 2:
        logger.setLevel(logging.DEBUG)
        H.setFormatter(debug_formatter)
    else:
        raise ValueError("Verbosity must be 0, 1 or 2.")

    logger.addHandler(H)

    return logger


def _get_logger(logger):
    """ Return the given logger, or the package logger for module-level functions called without one. """

    if logger is None:
        return logging.getLogger("jointgraph")
    return logger


def _convert_to_bool(value):
    """ Convert a value to a boolean type. """

    error_message = f"Could not convert string '{value}' to a boolean value."

    if isinstance(value, bool):  # value is already bool
        return value

    elif isinstance(value, str):
        if value.lower() in ["true", "t", "y", "yes"]:
            return True
        elif value.lower() in ["false", "f", "n", "no"]:
            return False
        else:
            raise ConfigError(error_message)
    else:
        raise ConfigError(error_message)


def _convert_to_int(value, name, minimum=None):
    """ Convert a value (e.g. a string from a config file) to an integer, optionally with a lower bound.

    Parameters
    ----------
    value : int, float or str
        The value to convert. Floats are accepted if integral, e.g. 1e3.
    name : str
        Name of the parameter, used in the error message.
    minimum : int, optional
        Smallest accepted value.

    Returns
    -------
    int
    """

    try:
        if isinstance(value, bool):
            raise ValueError
        elif isinstance(value, (int, np.integer)):
            converted = int(value)  # exact, also above 2**53
        else:
            converted = float(str(value))  # float() ensures conversion from 1e10 notation
            if not converted.is_integer():
                raise ValueError
            converted = int(converted)
    except (ValueError, OverflowError):
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Please use an integer.")

    if minimum is not None and converted < minimum:
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Must be an integer >= {minimum}.")

    return converted


def _convert_to_float(value, name, minimum=None, strict=False):
    """ Convert a value to a finite float, optionally with a lower bound (exclusive if strict). """

    try:
        if isinstance(value, bool):
            raise ValueError
        converted = float(str(value))
    except ValueError:
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Please use a float or integer.")

    if converted != converted or converted in (float("inf"), float("-inf")):
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Value must be finite.")

    if minimum is not None:
        if strict and converted <= minimum:
            raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Must be > {minimum}.")
        elif not strict and converted < minimum:
            raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Must be >= {minimum}.")

    return converted


def _convert_to_list(value, name, converter):
    """ Convert a list or comma-separated string to a list of values using converter(element, name). """

    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip() != ""]

    try:
        values = [converter(v, name) for v in value]
    except TypeError:
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Please give a list of values.")

    if len(values) == 0:
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. The list cannot be empty.")

    return values


def _check_option(value, name, valid):
    """ Check that value is one of the valid options (case-insensitive for strings). """

    if isinstance(value, str):
        value = value.lower()
    if value not in valid:
        raise ConfigError(f"Invalid value for '{name}' parameter: '{value}'. Must be one of: {valid}")
    return value
