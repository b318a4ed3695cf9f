from .exprs import compile_expr
from .naive import evaluate
from .plan import Plan, PlanError, compile_plan

__all__ = ["Plan", "PlanError", "compile_expr", "compile_plan", "evaluate"]
