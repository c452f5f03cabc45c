"""Exception hierarchy for ionshuttle."""


class IonShuttleError(Exception):
	"""Base class for all ionshuttle errors."""


class InvalidSpecError(IonShuttleError, ValueError):
	"""A chip specification or configuration is malformed."""


class InvalidCircuitError(IonShuttleError, ValueError):
	"""A circuit is malformed (self-gates, labels out of range, bad file lines)."""


class CapacityError(IonShuttleError, ValueError):
	"""A circuit needs more qubits than the chip can hold."""


class ContractViolationError(IonShuttleError, RuntimeError):
	"""An operation was called outside its precondition."""


class MaskedActionError(ContractViolationError):
	"""An action outside the legal action mask was applied."""


class DependencyViolationError(ContractViolationError):
	"""A gate was executed before one of its predecessors."""


class NumericError(IonShuttleError, ArithmeticError):
	"""Non-finite values appeared in a numeric computation."""


class BudgetExhaustedError(IonShuttleError, RuntimeError):
	"""No valid schedule was found within the given budget."""
