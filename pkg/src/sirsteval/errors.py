"""Exception types shared across the package."""


class UndefinedMetricError(ValueError):
    """A metric is mathematically undefined for the given input.

    Examples: recall with zero ground-truth positives, ROC-AUC with a
    single class, Pd over a corpus without any true target.
    """


class CorpusLoadError(RuntimeError):
    """One or more corpus entries failed to load.

    ``errors`` holds one ``(image_id, message)`` tuple per failed entry so
    callers can report every broken file at once.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        lines = "; ".join(f"{image_id}: {msg}" for image_id, msg in errors)
        super().__init__(f"{len(errors)} corpus entries failed to load: {lines}")


class PlacementError(RuntimeError):
    """Synthetic scene generation could not place all requested blobs."""
