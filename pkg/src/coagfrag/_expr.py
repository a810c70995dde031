"""Restricted arithmetic expressions for user-defined kernels."""
import ast
import math

_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
    "min": min,
    "max": max,
}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


def compile_expression(text, variables, constants=None):
    """Return a callable of ``variables`` evaluating ``text``.

    Only numbers, the named variables and constants, + - * / **, and the
    functions exp, log, sqrt, abs, min, max are accepted.
    """
    from .errors import DomainError

    constants = dict(constants or {})
    allowed_names = set(variables) | set(constants) | set(_FUNCS)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse expression {text!r}: {exc.msg}") from None

    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)):
            continue
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            continue
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
            continue
        if isinstance(node, _BINOPS + _UNARY):
            continue
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            continue
        if isinstance(node, ast.Name):
            if node.id not in allowed_names:
                raise DomainError(f"unknown name {node.id!r} in expression {text!r}")
            continue
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise DomainError(f"call not allowed in expression {text!r}")
            continue
        raise DomainError(f"construct {type(node).__name__} not allowed in expression {text!r}")

    code = compile(tree, "<kernel>", "eval")
    base = {"__builtins__": {}}
    base.update(_FUNCS)
    base.update({k: float(v) for k, v in constants.items()})
    names = tuple(variables)

    def fn(*args):
        scope = dict(base)
        scope.update(zip(names, args))
        return float(eval(code, scope))  # noqa: S307 - tree is whitelisted above

    return fn
