"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    pass


class CategoryRangeError(InvalidInputError):
    """A category id outside ``1..C`` (or ``0..C`` where background is allowed)."""


class InconsistentAnnotationError(InvalidInputError):
    """A foreground sample whose category is missing from its image's positive set."""


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(
            f"non-finite loss ({value!r}) at epoch {epoch}, batch {batch}"
        )
