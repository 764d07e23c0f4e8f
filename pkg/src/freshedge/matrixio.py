"""Plain-text matrix format for QCQP/SDP instances and solutions.

Every matrix is written as a header line followed by its rows, row-major,
floats in ``repr`` form so a round trip is exact::

    sdp 1
    blocks 2 3 2
    objective
    block 0
    1.0 0.0 0.0
    ...
    constraint 0 <= 1.0
    block 1
    ...
    end
"""
from __future__ import annotations

import io

import numpy as np

from .sdp_solver import Constraint, SdpInstance, SdpSolution


class FormatError(ValueError):
    pass


def _write_matrix(out, M):
    for row in np.atleast_2d(np.asarray(M, float)):
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def _write_vector(out, label, v):
    v = np.asarray(v, float).ravel()
    out.write(label + (" " + " ".join(repr(float(a)) for a in v) if len(v) else "") + "\n")


def dump_sdp(inst: SdpInstance) -> str:
    out = io.StringIO()
    out.write("sdp 1\n")
    out.write("blocks " + " ".join([str(len(inst.block_sizes))] + [str(n) for n in inst.block_sizes]) + "\n")
    out.write(f"tol {inst.tol!r}\n")
    out.write("objective\n")
    for b, C in enumerate(inst.objective):
        out.write(f"block {b}\n")
        _write_matrix(out, C)
    for k, c in enumerate(inst.constraints):
        out.write(f"constraint {k} {c.sense} {float(c.rhs)!r}\n")
        for b in sorted(c.coeffs):
            out.write(f"block {b}\n")
            _write_matrix(out, c.coeffs[b])
    out.write("end\n")
    return out.getvalue()


class _Lines:
    def __init__(self, text):
        self.lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        self.pos = 0

    def peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next(self):
        if self.pos >= len(self.lines):
            raise FormatError("unexpected end of input")
        self.pos += 1
        return self.lines[self.pos - 1]

    def matrix(self, n):
        rows = [np.array(self.next().split(), float) for _ in range(n)]
        M = np.array(rows)
        if M.shape != (n, n):
            raise FormatError(f"expected {n}x{n} matrix")
        return M


def load_sdp(text: str) -> SdpInstance:
    r = _Lines(text)
    if r.next() != "sdp 1":
        raise FormatError("missing 'sdp 1' header")
    parts = r.next().split()
    if parts[0] != "blocks":
        raise FormatError("missing blocks line")
    sizes = [int(v) for v in parts[2:]]
    if len(sizes) != int(parts[1]):
        raise FormatError("block count mismatch")
    tol = 1e-7
    if r.peek().startswith("tol"):
        tol = float(r.next().split()[1])
    if r.next() != "objective":
        raise FormatError("missing objective section")
    objective = []
    for b, n in enumerate(sizes):
        if r.next() != f"block {b}":
            raise FormatError("objective blocks out of order")
        objective.append(r.matrix(n))
    constraints = []
    while True:
        line = r.next()
        if line == "end":
            break
        head = line.split()
        if head[0] != "constraint" or len(head) != 4:
            raise FormatError(f"bad constraint header: {line}")
        coeffs = {}
        while r.peek() is not None and r.peek().startswith("block"):
            b = int(r.next().split()[1])
            coeffs[b] = r.matrix(sizes[b])
        constraints.append(Constraint(coeffs, head[2], float(head[3])))
    return SdpInstance(sizes, objective, constraints, tol)


def dump_solution(sol: SdpSolution) -> str:
    out = io.StringIO()
    out.write("sdp-solution 1\n")
    out.write(f"status {sol.status} {sol.iterations}\n")
    out.write(f"objectives {sol.primal_objective!r} {sol.dual_objective!r}\n")
    out.write("blocks " + " ".join([str(len(sol.X))] + [str(len(x)) for x in sol.X]) + "\n")
    _write_vector(out, "y", sol.y)
    _write_vector(out, "slack", sol.slack)
    _write_vector(out, "slack_dual", sol.slack_dual)
    for b, x in enumerate(sol.X):
        out.write(f"X {b}\n")
        _write_matrix(out, x)
    for b, z in enumerate(sol.Z):
        out.write(f"Z {b}\n")
        _write_matrix(out, z)
    out.write("end\n")
    return out.getvalue()


def load_solution(text: str) -> SdpSolution:
    r = _Lines(text)
    if r.next() != "sdp-solution 1":
        raise FormatError("missing 'sdp-solution 1' header")
    _, status, iters = r.next().split()
    _, pobj, dobj = r.next().split()
    parts = r.next().split()
    sizes = [int(v) for v in parts[2:]]

    def vec(label):
        p = r.next().split()
        if p[0] != label:
            raise FormatError(f"expected {label}")
        return np.array(p[1:], float)

    y, slack, slack_dual = vec("y"), vec("slack"), vec("slack_dual")
    X = []
    for b, n in enumerate(sizes):
        if r.next() != f"X {b}":
            raise FormatError("X blocks out of order")
        X.append(r.matrix(n))
    Z = []
    for b, n in enumerate(sizes):
        if r.next() != f"Z {b}":
            raise FormatError("Z blocks out of order")
        Z.append(r.matrix(n))
    if r.next() != "end":
        raise FormatError("missing end")
    return SdpSolution(X, y, Z, slack, slack_dual, float(pobj), float(dobj), int(iters), status)


def dump_matrices(labeled: dict) -> str:
    """Labeled dense matrices (e.g. the QCQP data), one ``matrix <label> <n>`` block each."""
    out = io.StringIO()
    out.write("matrices 1\n")
    for label, M in labeled.items():
        M = np.atleast_2d(np.asarray(M, float))
        out.write(f"matrix {label} {M.shape[0]} {M.shape[1]}\n")
        _write_matrix(out, M)
    out.write("end\n")
    return out.getvalue()


def load_matrices(text: str) -> dict:
    r = _Lines(text)
    if r.next() != "matrices 1":
        raise FormatError("missing 'matrices 1' header")
    out = {}
    while True:
        line = r.next()
        if line == "end":
            return out
        _, label, nr, nc = line.split()
        M = np.array([np.array(r.next().split(), float) for _ in range(int(nr))])
        out[label] = M.reshape(int(nr), int(nc))
