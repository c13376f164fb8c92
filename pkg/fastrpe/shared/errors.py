class FastRpeError(Exception):
    pass


class ShapeError(FastRpeError, ValueError):
    pass


class FeatureOverflowError(FastRpeError, OverflowError):
    def __init__(self, exponent: float, limit: float):
        super().__init__(f"feature exponent {exponent:.3g} exceeds {limit:g}; rescale or normalize the inputs")
        self.exponent = exponent
        self.limit = limit


class DegenerateRowError(FastRpeError, ValueError):
    pass


class PreconditionError(FastRpeError, ValueError):
    pass


class RangeError(FastRpeError, OverflowError):
    pass


class CodecError(FastRpeError, ValueError):
    pass
