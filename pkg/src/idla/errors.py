"""Exception types. Each carries the CLI exit code it maps to."""


class IDLAError(Exception):
    exit_code = 1


class PreconditionViolated(IDLAError, ValueError):
    exit_code = 3


class InvalidInput(PreconditionViolated):
    pass


class LambdaOutOfRange(PreconditionViolated):
    pass


class ConfigOutsideDomain(PreconditionViolated):
    pass


class WrongDimension(PreconditionViolated):
    pass


class BudgetExceeded(IDLAError, RuntimeError):
    exit_code = 4


class StepCapExceeded(BudgetExceeded):
    pass


class DomainTooLarge(BudgetExceeded):
    pass
