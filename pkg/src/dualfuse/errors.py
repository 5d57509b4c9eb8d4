"""Exception hierarchy shared by all dualfuse modules."""

from __future__ import annotations


class DualfuseError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(DualfuseError, ValueError):
    """A domain value failed its construction invariants."""


class NonConvergent(DualfuseError):
    """Iterative undistortion did not reach the tolerance within max_iter.

    Signals a point outside the well-behaved field of view or pathological
    distortion coefficients.
    """


class Singular(DualfuseError):
    """A closed-form homography came out singular (plane through the camera)."""


class TooFewPoints(DualfuseError):
    """Fewer than the minimum 4 correspondences were supplied."""


class DegenerateConfiguration(DualfuseError):
    """Correspondences are rank-deficient (collinear or duplicated points)."""


class AtInfinity(DualfuseError):
    """A point mapped onto the line at infinity under a homography."""


class DegenerateBox(DualfuseError):
    """A transformed box collapsed below 1 px in some dimension."""


class InvalidRegion(DualfuseError):
    """The mapped narrow-frame region degenerated (hull area under 1 px^2)."""


class MissingFrame(DualfuseError):
    """A prediction references a frame_id with no ground-truth entry."""


class ParseError(DualfuseError):
    """Malformed annotation/correspondence input.

    Carries the offending location so CLI messages can name it.
    """

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class ClassIndexOutOfRange(ParseError):
    """A YOLO class index is outside the configured class list."""


class UnknownClass(DualfuseError):
    """A box's class label is not present in the class list being serialized."""


class SchemaError(DualfuseError):
    """A calibration bundle (or config) document violates its schema.

    Names the offending key path.
    """

    def __init__(self, message: str, *, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)
