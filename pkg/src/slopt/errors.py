"""Exception hierarchy shared across the package."""


class SloptError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(SloptError):
    """Input JSON does not match the documented function schema."""


class ValidationError(SloptError):
    """Function parsed but violates a semantic invariant (SSA, arity, ...)."""


class ArityError(SloptError):
    """Operator applied to the wrong number of inputs/outputs."""


class WidthError(SloptError):
    """A value does not fit the width it is declared with (e.g. u1 > 1)."""


class NoTemplateError(SloptError):
    """No instruction template exists for an operator/operand shape."""


class StaleRecordError(SloptError):
    """revert() called with a record that is not the most recent mutation."""


class UnsupportedSignatureError(SloptError):
    """Function signature has more pointer arguments than the ABI binding."""


class UnsupportedInstructionError(SloptError):
    """The machine-code encoder met a mnemonic/operand form it cannot encode."""


class UnknownMnemonicError(SloptError):
    """The simulated-cost latency table has no entry for a mnemonic."""


class PlatformUnsupportedError(SloptError):
    """Host cannot execute the generated code (arch or missing CPU features)."""


class MapError(SloptError):
    """Could not create or protect an executable code buffer."""


class CounterUnavailableError(SloptError):
    """Hardware backend cannot read the timestamp counter."""


class EmissionInvariantError(SloptError):
    """Internal consistency violation during assembly emission."""


class VerificationError(SloptError):
    """Generated code disagreed with the reference interpreter."""
