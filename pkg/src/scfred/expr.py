"""Tiny expression trees for nonlinear map definitions.

Problem files describe nonlinear maps as JSON trees, so nothing in a config
ever executes as code.  Trees are built over two variable banks: parameters
`a` (indexed "a", i) and unknowns `w` (indexed "w", j).  Evaluation is
forward-mode: every node carries its value plus gradients in both banks, so
Jacobians are analytic rather than finite-differenced.

Node shapes::

    {"op": "const", "value": 2.5}
    {"op": "a", "i": 0}            {"op": "w", "j": 1}
    {"op": "add", "args": [...]}   {"op": "mul", "args": [...]}   (n-ary)
    {"op": "sub", "args": [x, y]}
    {"op": "neg", "arg": x}        {"op": "scale", "c": 0.5, "arg": x}
    {"op": "pow", "k": 3, "arg": x}  (integer k >= 0)
    {"op": "exp", "arg": x}

A map into R^q is a list of q trees.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

# --- constructors (for fixtures and builders) --------------------------------


def const(v: float) -> dict:
    return {"op": "const", "value": float(v)}


def param(i: int) -> dict:
    return {"op": "a", "i": int(i)}


def var(j: int) -> dict:
    return {"op": "w", "j": int(j)}


def add(*args: dict) -> dict:
    return {"op": "add", "args": list(args)}


def sub(x: dict, y: dict) -> dict:
    return {"op": "sub", "args": [x, y]}


def mul(*args: dict) -> dict:
    return {"op": "mul", "args": list(args)}


def neg(x: dict) -> dict:
    return {"op": "neg", "arg": x}


def scale(c: float, x: dict) -> dict:
    return {"op": "scale", "c": float(c), "arg": x}


def powi(x: dict, k: int) -> dict:
    return {"op": "pow", "k": int(k), "arg": x}


def exp(x: dict) -> dict:
    return {"op": "exp", "arg": x}


# --- validation ---------------------------------------------------------------


def validate_expr(node, n_params: int, n_vars: int) -> None:
    """Check tree shape and variable indices; raises ValidationError."""
    if not isinstance(node, dict) or "op" not in node:
        raise ValidationError(f"not an expression node: {node!r}")
    op = node["op"]
    if op == "const":
        float(node["value"])
    elif op == "a":
        if not 0 <= int(node["i"]) < n_params:
            raise ValidationError(f"parameter index {node['i']} out of range [0, {n_params})")
    elif op == "w":
        if not 0 <= int(node["j"]) < n_vars:
            raise ValidationError(f"unknown index {node['j']} out of range [0, {n_vars})")
    elif op in ("add", "mul"):
        if not node["args"]:
            raise ValidationError(f"{op} needs at least one argument")
        for child in node["args"]:
            validate_expr(child, n_params, n_vars)
    elif op == "sub":
        if len(node["args"]) != 2:
            raise ValidationError("sub is binary")
        for child in node["args"]:
            validate_expr(child, n_params, n_vars)
    elif op in ("neg", "exp"):
        validate_expr(node["arg"], n_params, n_vars)
    elif op == "scale":
        float(node["c"])
        validate_expr(node["arg"], n_params, n_vars)
    elif op == "pow":
        if int(node["k"]) < 0:
            raise ValidationError("pow exponent must be a nonnegative integer")
        validate_expr(node["arg"], n_params, n_vars)
    else:
        raise ValidationError(f"unknown op {op!r}")


# --- evaluation ---------------------------------------------------------------


def _dual(node, a: np.ndarray, w: np.ndarray):
    """Return (value, grad_a, grad_w) for one node."""
    op = node["op"]
    if op == "const":
        return float(node["value"]), np.zeros(len(a)), np.zeros(len(w))
    if op == "a":
        g = np.zeros(len(a))
        g[node["i"]] = 1.0
        return float(a[node["i"]]), g, np.zeros(len(w))
    if op == "w":
        g = np.zeros(len(w))
        g[node["j"]] = 1.0
        return float(w[node["j"]]), np.zeros(len(a)), g
    if op == "add":
        v, ga, gw = 0.0, np.zeros(len(a)), np.zeros(len(w))
        for child in node["args"]:
            cv, ca, cw = _dual(child, a, w)
            v += cv
            ga += ca
            gw += cw
        return v, ga, gw
    if op == "sub":
        xv, xa, xw = _dual(node["args"][0], a, w)
        yv, ya, yw = _dual(node["args"][1], a, w)
        return xv - yv, xa - ya, xw - yw
    if op == "mul":
        v, ga, gw = 1.0, np.zeros(len(a)), np.zeros(len(w))
        for child in node["args"]:
            cv, ca, cw = _dual(child, a, w)
            ga = ga * cv + v * ca
            gw = gw * cv + v * cw
            v *= cv
        return v, ga, gw
    if op == "neg":
        v, ga, gw = _dual(node["arg"], a, w)
        return -v, -ga, -gw
    if op == "scale":
        c = float(node["c"])
        v, ga, gw = _dual(node["arg"], a, w)
        return c * v, c * ga, c * gw
    if op == "pow":
        k = int(node["k"])
        v, ga, gw = _dual(node["arg"], a, w)
        if k == 0:
            return 1.0, np.zeros(len(a)), np.zeros(len(w))
        d = k * v ** (k - 1)
        return v**k, d * ga, d * gw
    if op == "exp":
        v, ga, gw = _dual(node["arg"], a, w)
        e = math.exp(v)
        return e, e * ga, e * gw
    raise ValidationError(f"unknown op {op!r}")


def eval_expr(node, a, w) -> float:
    return _dual(node, np.asarray(a, float), np.asarray(w, float))[0]


def eval_vector(exprs: list, a, w) -> np.ndarray:
    a = np.asarray(a, float)
    w = np.asarray(w, float)
    return np.array([_dual(e, a, w)[0] for e in exprs])


def jacobians(exprs: list, a, w) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values plus both Jacobians: (F, dF/da, dF/dw), analytic."""
    a = np.asarray(a, float)
    w = np.asarray(w, float)
    vals, ja, jw = [], [], []
    for e in exprs:
        v, ga, gw = _dual(e, a, w)
        vals.append(v)
        ja.append(ga)
        jw.append(gw)
    return (
        np.array(vals),
        np.array(ja).reshape(len(exprs), len(a)),
        np.array(jw).reshape(len(exprs), len(w)),
    )
