"""Exception types shared across the package."""


class AvaffordError(Exception):
    """Base class for all package-specific failures."""


class MissingFileError(AvaffordError):
    """A referenced asset (image, mask, audio, checkpoint) is absent on disk."""


class MalformedRecordError(AvaffordError):
    """A manifest record has the wrong field count or a bad category string."""


class EmptySeenSetError(AvaffordError):
    """Every category was marked unseen, leaving nothing to train on."""


class InvalidConfigError(AvaffordError):
    """A configuration value violates its contract (nonpositive size, bad enum, ...)."""


class UnknownConfigKeyError(InvalidConfigError):
    """A config file contains a key that no config field matches."""


class TooShortError(AvaffordError):
    """A waveform is shorter than a single analysis frame."""


class BadShapeError(AvaffordError):
    """An array does not satisfy a required shape constraint."""


class ShapeMismatchError(BadShapeError):
    """Two arrays that must agree in shape do not."""


class EmptyListError(AvaffordError):
    """An aggregate was requested over zero samples."""


class LengthMismatchError(AvaffordError):
    """Parallel lists (predictions / ground truths / categories) differ in length."""


class CategoryWithoutAudioError(AvaffordError):
    """A category has images to train on but no audio clip to pair them with."""


class NonFiniteLossError(AvaffordError):
    """Training produced a NaN or Inf loss; aborted to surface the bug early."""


class BadAudioError(AvaffordError):
    """An audio file could not be decoded into a usable waveform."""
