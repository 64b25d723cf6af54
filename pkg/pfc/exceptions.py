class PfcError(Exception):
    """Base class of every error raised by the toolkit. `code` is the
    machine-readable identifier written to ``error.json`` by the CLI and
    `exit_code` the process exit status it maps to.

    """

    code = "pfc_error"
    exit_code = 1

    def __init__(self, message, field=None):
        super().__init__(message)
        self.message = message
        self.field = field

    def to_dict(self):
        return {"error": self.code, "message": self.message,
                "field": self.field}


class ScenarioError(PfcError):
    code = "invalid_scenario"
    exit_code = 2

    def __str__(self):
        if self.field:
            return f"{self.field}: {self.message}"
        return self.message


class GraphError(PfcError):
    code = "invalid_graph"
    exit_code = 3


class ModelError(PfcError):
    code = "invalid_model"
    exit_code = 4


class RelationError(PfcError):
    code = "relation_error"
    exit_code = 5


class ConvergenceError(PfcError):
    code = "not_converged"
    exit_code = 6

    def __init__(self, message, residual=None, field=None):
        super().__init__(message, field=field)
        self.residual = residual

    def to_dict(self):
        d = super().to_dict()
        d["residual"] = self.residual
        return d


class SynthesisError(PfcError):
    code = "synthesis_error"
    exit_code = 7
