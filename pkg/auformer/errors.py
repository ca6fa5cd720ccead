"""
Exception hierarchy shared by every AUFormer module
"""


class AUFormerError(Exception):
    """
    Base class for all errors raised by this package
    """


class ShapeError(AUFormerError, ValueError):
    """
    Tensor shapes or channel counts do not line up
    """


class DimensionError(ShapeError):
    """
    Stored tensors do not match the dimensions of the requested configuration
    """


class ConfigurationError(AUFormerError, ValueError):
    """
    Invalid configuration value or violated precondition
    """


class FormatError(AUFormerError, ValueError):
    """
    Malformed weight, sample or manifest file
    """


class DivergenceError(AUFormerError, RuntimeError):
    """
    Training produced a non-finite loss
    """
