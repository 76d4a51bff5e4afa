"""Exception types shared across the package."""


class AccentTtsError(Exception):
    """Base class for all package errors."""


class ConfigError(AccentTtsError):
    """Invalid or inconsistent experiment configuration."""


class ManifestError(AccentTtsError):
    """Malformed corpus manifest (bad record, missing file, empty manifest)."""


class CorpusError(AccentTtsError):
    """Corpus-level invariant violation (vocabularies, split preconditions)."""


class AudioError(AccentTtsError):
    """Audio too short, wrong shape, or otherwise unusable."""


class UnknownSymbolError(AccentTtsError):
    """Strict tokenization hit a symbol that is not in the table."""

    def __init__(self, symbols):
        self.symbols = sorted(set(symbols))
        super().__init__(f"unknown symbols: {self.symbols!r}")


class CompatibilityError(AccentTtsError):
    """Artifacts (checkpoint, bank, mel config) do not match each other."""


class TrainingDivergedError(AccentTtsError):
    """Non-finite loss during training; carries the offending batch ids."""

    def __init__(self, step, batch_ids, breakdown=None):
        self.step = step
        self.batch_ids = list(batch_ids)
        self.breakdown = breakdown
        super().__init__(
            f"non-finite loss at step {step}; offending batch ids: {self.batch_ids!r}"
        )


class ArtifactMissingError(AccentTtsError):
    """A required upstream artifact is absent; names the command that makes it."""

    def __init__(self, path, producer):
        self.path = str(path)
        self.producer = producer
        super().__init__(
            f"missing artifact {path}; produce it with `accent-tts {producer}` first"
        )
