"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PureCodecError`, so the CLI can map them to a nonzero exit code
with a one-line message.
"""


class PureCodecError(Exception):
    """Base class for all package errors."""


class ConfigError(PureCodecError, ValueError):
    """Invalid configuration value or malformed config file."""


class ShapeError(PureCodecError, ValueError):
    """Array dimensions disagree with the model or with each other."""


class SignalTooShortError(PureCodecError, ValueError):
    """Signal shorter than one analysis frame."""


class WavFormatError(PureCodecError, ValueError):
    """Unsupported or inconsistent WAV file."""


class ModelFormatError(PureCodecError, ValueError):
    """Corrupt or incompatible serialized quantizer stack."""


class BitstreamError(PureCodecError, ValueError):
    """Malformed ``.pure`` packet.

    ``kind`` is a stable machine-readable tag, e.g. ``"bad_magic"`` or
    ``"truncated_payload"``.
    """

    def __init__(self, kind, message=None):
        self.kind = kind
        super().__init__(message or kind.replace("_", " "))
