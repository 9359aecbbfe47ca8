"""Exception types carrying module-qualified error codes."""


class PucciLogisticError(Exception):
    module = "core"

    def __init__(self, code, message="", **details):
        self.code = code
        self.details = details
        super().__init__(f"{self.module}.{code}: {message}" if message else f"{self.module}.{code}")

    @property
    def qualified_code(self):
        return f"{self.module}.{self.code}"


class GeometryError(PucciLogisticError):
    module = "geometry"


class OperatorError(PucciLogisticError):
    module = "operator"


class SolverError(PucciLogisticError):
    module = "solver"


class EigenError(PucciLogisticError):
    module = "eigen"


class LogisticError(PucciLogisticError):
    module = "logistic"


class BlowupError(PucciLogisticError):
    module = "blowup"


class ConfigError(PucciLogisticError):
    module = "cli"
