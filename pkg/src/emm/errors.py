"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario or component configuration."""


class OrderingError(ValueError):
    """Input arrived out of time order."""


class DimensionError(ValueError):
    """Distributions defined over different bucket counts."""


class EncodingError(ValueError):
    """A datagram cannot be represented in the wire format."""


class MalformedDatagram(ValueError):
    """Wire bytes that do not decode to a valid datagram.

    ``offset`` is the byte position of the first violation.
    """

    def __init__(self, reason: str, offset: int):
        super().__init__(f"{reason} (at byte offset {offset})")
        self.reason = reason
        self.offset = offset


class AlertDeliveryError(RuntimeError):
    """The alert sink could not record an alert."""


class ComparisonError(ValueError):
    """Run reports that cannot be compared with each other."""
