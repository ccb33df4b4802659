"""Exception hierarchy for gradnet. Every error carries an error_name that the command line
front end prints on stderr, so scripts can match on it regardless of the Python class name."""


class GradnetError(Exception):
    """Base class of all domain errors raised by gradnet"""

    error_name = "GradnetError"

    def __init__(self, message : str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return self.message


#netlist parsing

class NetlistError(GradnetError):
    error_name = "NetlistError"


class NetlistSyntaxError(NetlistError):
    """Malformed JSON after comment stripping"""

    error_name = "SyntaxError"

    def __init__(self, message, line = None, column = None):
        if line is not None:
            message = "%s (line %d, column %d)"%(message, line, column)
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(NetlistError):
    """A field required by the module definition format is missing or has the wrong type"""

    error_name = "SchemaError"


#compilation

class CompileError(GradnetError):
    error_name = "CompileError"


class ElementUnknownPort(CompileError):
    error_name = "ElementUnknownPort"


class ParamResolutionError(CompileError):
    error_name = "ParamResolutionError"


class TopHasExternalNodes(CompileError):
    error_name = "TopHasExternalNodes"


class UnsupportedGalv(CompileError):
    error_name = "UnsupportedGalv"


#submodels

class SubModelError(GradnetError):
    error_name = "SubModelError"


class ExprParseError(SubModelError):
    error_name = "ExprParseError"

    def __init__(self, message, position = None):
        if position is not None:
            message = "%s at position %d"%(message, position)
        super().__init__(message)
        self.position = position


class UnboundVariable(SubModelError):
    error_name = "UnboundVariable"

    def __init__(self, name):
        super().__init__("Unbound variable %s"%name)
        self.name = name


class TableShapeError(SubModelError):
    error_name = "TableShapeError"


class AxisNotMonotonic(SubModelError):
    error_name = "AxisNotMonotonic"


class TableNotFound(SubModelError):
    error_name = "TableNotFound"

    def __init__(self, message, corner = None, temperature = None):
        super().__init__(message)
        self.corner = corner
        self.temperature = temperature


class EvalDomainError(SubModelError):
    error_name = "EvalDomainError"


#basic elements

class ElementError(GradnetError):
    error_name = "ElementError"


class ArityError(ElementError):
    error_name = "ArityError"


class UnsupportedAnalysis(ElementError):
    error_name = "UnsupportedAnalysis"


#graph execution

class GraphError(GradnetError):
    """An error raised below an instance, annotated with the instance path. The original
    error is kept as __cause__ and its error_name is reported."""

    def __init__(self, path, cause):
        super().__init__("%s: %s"%(path, cause))
        self.path = path
        self.error_name = getattr(cause, "error_name", type(cause).__name__)


#equation solving

class SolverError(GradnetError):
    error_name = "SolverError"


class SingularJacobian(SolverError):
    error_name = "SingularJacobian"

    def __init__(self, message, row = None, node = None):
        if node is not None:
            message = "%s (pivot row %d, unknown %s)"%(message, row, node)
        super().__init__(message)
        self.row = row
        self.node = node


class SingularMatrix(SolverError):
    error_name = "SingularMatrix"


class NoConvergence(SolverError):
    error_name = "NoConvergence"

    def __init__(self, message, iterations = None, residual = None, time = None):
        if time is not None:
            message = "%s at t=%g"%(message, time)
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.time = time


#device sizing

class SizingError(GradnetError):
    error_name = "SizingError"


class SpecError(SizingError):
    error_name = "SpecError"


class CornerTableMissing(SizingError):
    error_name = "CornerTableMissing"


class SolveFailedAtIterate(SizingError):
    error_name = "SolveFailedAtIterate"
