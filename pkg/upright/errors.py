"""Exception hierarchy shared by every module.

Each class carries the process exit status the command-line front end
uses when the error escapes a subcommand.
"""


class UprightError(Exception):
	exit_code = 1


class DomainError(UprightError, ValueError):
	"""An argument outside the domain of an operation: angles, grids,
	ranges, tensor shapes, embedding vocabulary."""
	exit_code = 3


class FormatError(UprightError):
	"""A file that cannot be decoded."""
	exit_code = 3


class HeaderError(FormatError):
	pass


class TruncatedPayload(FormatError):
	pass


class ValueRangeError(FormatError):
	"""A decoded value violates a stored invariant."""
	def __init__(self, message, index=None):
		super().__init__(message)
		self.index = index


class NumericError(UprightError, ArithmeticError):
	"""A loss or activation went non-finite."""
	exit_code = 4


class BrokenPipe(UprightError):
	pass
