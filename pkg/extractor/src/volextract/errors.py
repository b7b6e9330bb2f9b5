class VolextractError(Exception):
    """Base class for extraction failures."""


class UnreadableVolume(VolextractError):
    """The input file is not a volume this reader understands."""


class ModelUnavailable(VolextractError):
    """The requested backbone (or its weights) cannot be loaded here."""
