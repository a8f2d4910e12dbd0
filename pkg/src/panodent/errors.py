"""Exception types shared across the package.

Every error raised by panodent derives from PanodentError so callers can
catch the whole family. The CLI maps ConfigurationError subclasses to exit
code 1 (bad input/configuration) and everything else to exit code 2.
"""


class PanodentError(Exception):
    """Base class for all panodent errors."""


class ConfigurationError(PanodentError):
    """Invalid configuration, flags, or input files. CLI exit code 1."""


class ConfigError(ConfigurationError):
    """A config value is missing, malformed, or out of range."""


# --- report corpus ---------------------------------------------------------

class MalformedLine(PanodentError):
    """A non-blank report line lacks the two-digit-colon prefix."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateTopicNumber(PanodentError):
    """The same topic number appears on more than one report line."""


class InvalidFdiCode(PanodentError):
    """A two-digit code is not a valid FDI tooth number."""


class InvalidPattern(ConfigurationError):
    """A configured exclusion pattern is not a valid regular expression."""


# --- phrase extraction -----------------------------------------------------

class EndpointUnavailable(PanodentError):
    """The remote extraction endpoint could not be reached."""


class ResponseUnparseable(PanodentError):
    """The endpoint response does not contain a recognizable topic list."""


class RateLimited(PanodentError):
    """The endpoint asked us to back off; the caller may retry."""


class CacheCorrupt(PanodentError):
    """An extraction cache entry is unreadable or fails validation."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{message} (key {key})")
        self.key = key


# --- labeling --------------------------------------------------------------

class EmptyVocabulary(PanodentError):
    """No condition survives the frequency threshold and allowlist."""


class UnknownImage(PanodentError):
    """A report references an image_id absent from the manifest."""


# --- crop engine -----------------------------------------------------------

class ManifestParseError(ConfigurationError):
    """The segmentation manifest cannot be parsed or violates its schema."""


class MissingImageDimensions(ManifestParseError):
    """A manifest image entry lacks width/height."""


class ImageTooSmall(PanodentError):
    """The image is smaller than the requested crop window."""


class DimensionMismatch(PanodentError):
    """A raster does not match the dimensions the crop was planned against."""


class BadRatios(ConfigurationError):
    """Split ratios are not positive or do not sum to 1."""


class UnknownCondition(PanodentError):
    """A condition index is outside the vocabulary range."""


# --- metrics ---------------------------------------------------------------

class EmptyCounts(PanodentError):
    """A confusion matrix with zero total cannot be evaluated."""


class LengthMismatch(PanodentError):
    """Paired vectors have different lengths."""


class DegenerateAgreement(PanodentError):
    """All ratings fall in one category; Fleiss' kappa is undefined."""


class RankDeficient(PanodentError):
    """The regression design matrix is rank deficient or underdetermined."""


class DegenerateVariance(PanodentError):
    """The response has zero variance; R-squared is undefined."""


# --- expert study ----------------------------------------------------------

class StratumExhausted(PanodentError):
    """A sampling stratum has fewer items than requested."""

    def __init__(self, condition_index: int, stratum: str, available: int, requested: int):
        super().__init__(
            f"condition {condition_index}, stratum {stratum}: "
            f"{available} available, {requested} requested"
        )
        self.condition_index = condition_index
        self.stratum = stratum
        self.available = available
        self.requested = requested


class IncompleteAnnotations(PanodentError):
    """Some (rater, item) pairs are missing from an annotation set."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(f"{r}/{i}" for r, i in self.missing[:5])
        more = "" if len(self.missing) <= 5 else f" (+{len(self.missing) - 5} more)"
        super().__init__(f"missing annotations: {preview}{more}")


class EmptyGroup(PanodentError):
    """A rater group has no members."""


# --- annotation service ----------------------------------------------------

class UnknownRater(PanodentError):
    """The rater id is not in the provisioned list."""


class UnknownCrop(PanodentError):
    """The crop id is not part of the served dataset."""


class BadVectorLength(PanodentError):
    """A label vector does not match the vocabulary size."""
