#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

"""
Error types raised by st_stickbreaking.

Every error derives from :class:`StsbError` and carries a short
machine readable ``reason`` tag, so that callers (the command line in
particular) can report failures without parsing messages.
"""


# StsbError
#
# Base of every domain error.
#
# Args:
#    message (str): A short description of the failure
#    detail (str): Optional longer explanation
#    reason (str): A kebab-case tag identifying the failure
#
class StsbError(Exception):
    def __init__(self, message, *, detail=None, reason=None):
        super().__init__(message)
        self.message = message
        self.detail = detail
        self.reason = reason

    def __str__(self):
        if self.detail:
            return "{}\n\n{}".format(self.message, self.detail)
        return self.message


class DatasetError(StsbError):
    pass


class KernelError(StsbError):
    pass


class StickError(StsbError):
    pass


class SamplerError(StsbError):
    pass


class FieldError(StsbError):
    pass


class EvaluationError(StsbError):
    pass


class FormatError(StsbError):
    pass


class ConfigError(StsbError):
    pass


#
# Dataset validation
#
class EmptyDataset(DatasetError):
    def __init__(self):
        super().__init__("Dataset has no observations", reason="empty-dataset")


class NonFiniteValue(DatasetError):
    def __init__(self, index, field="y"):
        super().__init__(
            "Observation {} has a non-finite {}".format(index, field),
            reason="non-finite-value",
        )
        self.index = index
        self.field = field


class CovariateLengthMismatch(DatasetError):
    def __init__(self, index, expected, got):
        super().__init__(
            "Observation {} has {} covariates, expected {}".format(
                index, got, expected
            ),
            reason="covariate-length-mismatch",
        )
        self.index = index
        self.expected = expected
        self.got = got


class ContinuousTime(DatasetError):
    def __init__(self, index, value):
        super().__init__(
            "Observation {} has time {!r}, expected an integer >= 1".format(
                index, value
            ),
            detail="Time is a discrete index 1..T; map calendar data to "
            "indices before loading.",
            reason="continuous-time",
        )
        self.index = index
        self.value = value


class PointOutsideDomain(DatasetError):
    def __init__(self, index):
        super().__init__(
            "Observation {} lies outside the dataset domain".format(index),
            reason="point-outside-domain",
        )
        self.index = index


#
# Kernels and sticks
#
class MissingBandwidth(KernelError):
    def __init__(self, name):
        super().__init__(
            "Separable kernel requires bandwidth '{}'".format(name),
            reason="missing-bandwidth",
        )
        self.name = name


class InvalidLambda(KernelError):
    def __init__(self, value):
        super().__init__(
            "Interaction lambda={} is outside [0, 1]".format(value),
            reason="invalid-lambda",
        )
        self.value = value


class GOutOfRange(StickError):
    def __init__(self, value):
        super().__init__(
            "Kernel ratio g={} is outside [0, 1]".format(value),
            reason="g-out-of-range",
        )
        self.value = value


class DegenerateDenominator(StickError):
    def __init__(self, value):
        super().__init__(
            "Kernel mean estimate {:.3g} is too small to form a ratio".format(
                value
            ),
            reason="degenerate-denominator",
        )
        self.value = value


#
# Samplers
#
class AllZeroWeights(SamplerError):
    def __init__(self, index):
        super().__init__(
            "Allocation weights of observation {} are all zero".format(index),
            detail="The component weights or likelihoods collapsed "
            "numerically; they are never renormalized from exact zeros.",
            reason="all-zero-weights",
        )
        self.index = index


class NoLambdaInTrace(SamplerError):
    def __init__(self, kind):
        super().__init__(
            "Trace of a '{}' kernel fit has no lambda samples".format(kind),
            reason="no-lambda-in-trace",
        )
        self.kind = kind


class ChainFailure(SamplerError):
    def __init__(self, iteration, operation, error):
        super().__init__(
            "Iteration {}: {} failed: {}".format(iteration, operation, error),
            reason=getattr(error, "reason", None) or "chain-failure",
        )
        self.iteration = iteration
        self.operation = operation


class FactorizationFailure(FieldError):
    def __init__(self, attempts, jitter):
        super().__init__(
            "Covariance matrix is not positive definite after {} attempts "
            "(last jitter {:.3g})".format(attempts, jitter),
            reason="factorization-failure",
        )
        self.attempts = attempts
        self.jitter = jitter


class SizeGuardExceeded(FieldError):
    def __init__(self, n, limit):
        super().__init__(
            "{} points exceed the dense-factorization limit of {}".format(
                n, limit
            ),
            detail="Raise size_guard or lower subsample_fraction.",
            reason="size-guard-exceeded",
        )
        self.n = n
        self.limit = limit


class EmptyRealization(FieldError):
    def __init__(self):
        super().__init__(
            "Point process realization has no points",
            reason="empty-realization",
        )


class UnsupportedParams(FieldError):
    def __init__(self, model, message):
        super().__init__(
            "Covariance model '{}': {}".format(model, message),
            reason="unsupported-params",
        )
        self.model = model


#
# Prediction and scoring
#
class CovariateMismatch(EvaluationError):
    def __init__(self, expected, got):
        super().__init__(
            "Fit used {} covariates but {} were supplied".format(
                expected, got
            ),
            reason="covariate-mismatch",
        )
        self.expected = expected
        self.got = got


class EmptyTrace(EvaluationError):
    def __init__(self):
        super().__init__("Trace has no kept iterations", reason="empty-trace")


class LengthMismatch(EvaluationError):
    def __init__(self, expected, got):
        super().__init__(
            "Length mismatch: expected {}, got {}".format(expected, got),
            reason="length-mismatch",
        )
        self.expected = expected
        self.got = got


class PointMismatch(EvaluationError):
    def __init__(self, point):
        super().__init__(
            "No prediction for point {}".format(point),
            reason="point-mismatch",
        )
        self.point = point


class NothingToScore(EvaluationError):
    def __init__(self):
        super().__init__(
            "Truth has no observed values to score", reason="nothing-to-score"
        )


class UnsortedGrid(EvaluationError):
    def __init__(self):
        super().__init__(
            "Density grid must be sorted in increasing order",
            reason="unsorted-grid",
        )


#
# Files and configuration
#
class ParseError(FormatError):
    def __init__(self, line, message):
        super().__init__(
            "Line {}: {}".format(line, message), reason="parse-error"
        )
        self.line = line


class MissingColumn(FormatError):
    def __init__(self, name):
        super().__init__(
            "Missing required column '{}'".format(name),
            reason="missing-column",
        )
        self.name = name


class UnknownKey(ConfigError):
    def __init__(self, name):
        super().__init__(
            "Unknown configuration key '{}'".format(name),
            reason="unknown-key",
        )
        self.name = name


class BadValue(ConfigError):
    def __init__(self, key, value, message=None):
        super().__init__(
            "Bad value {!r} for '{}'{}".format(
                value, key, ": " + message if message else ""
            ),
            reason="bad-value",
        )
        self.key = key
        self.value = value
