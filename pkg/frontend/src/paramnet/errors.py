"""Package errors."""


class ParamNetError(Exception):
    """Base class for all package errors."""


class DatasetContractError(ParamNetError, ValueError):
    """The dataset container violates the shared HDF5 layout contract."""


class ShapeCompatibilityError(ParamNetError, ValueError):
    """Input spatial size is incompatible with the model's downsampling."""
