"""Rank-local DG discretisation of linear advection ``q_t + a . grad q = 0``.

Elements are grouped by type and processed in batches.  The spatial
operator always acts on nodal values.  Hexahedra are integrated in time
nodally; the other types are integrated in modal space: the state is
projected once per step, every stage projects its nodal residual and
reconstructs the nodal state for the next operator evaluation.  Every element sees
the same arithmetic whichever rank owns it: volume term first, then one
face contribution per local face in face order.  That is what makes the
result independent of the partition.

The state exchanged between ranks uses one fixed-size slot per element,
``(n_var, (N+1)^3)``, holding the nodal values in the leading entries.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, SynchronizationError, TopologyError
from ..mesh.core import Mesh
from ..mesh.elements import ElementType, affine_map, face_area, face_normal
from ..timing import Category, TimerSet
from .lserk import CK45, LserkScheme
from .modal import modal_project, modal_reconstruct
from .reference import n_face_points, reference_operators

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdvectionSetup:
    N: int = 5
    n_var: int = 1
    velocity: tuple[float, float, float] = (1.0, 0.5, 0.25)
    scheme: LserkScheme = CK45

    @property
    def slot_size(self) -> int:
        return (self.N + 1) ** 3


class _Group:
    """All local elements of one type."""

    def __init__(self, etype, local_ids, ops):
        self.etype = etype
        self.local_ids = np.asarray(local_ids, dtype=np.int64)
        self.ops = ops
        self.basis = ops.basis
        self.n = len(local_ids)


class LocalDiscretization:
    def __init__(self, mesh: Mesh, setup: AdvectionSetup, elem_range=None, offsets=None, rank: int = 0):
        self.mesh = mesh
        self.setup = setup
        self.rank = rank
        lo, hi = elem_range if elem_range is not None else (0, mesh.n_elems)
        self.lo, self.hi = int(lo), int(hi)
        self.offsets = np.asarray(offsets if offsets is not None else [0, mesh.n_elems], dtype=np.int64)
        self.n_local = self.hi - self.lo
        a = np.asarray(setup.velocity, dtype=float)
        self.velocity = a

        types = mesh.element_types[self.lo:self.hi]
        self.groups: dict[ElementType, _Group] = {}
        self.group_of = np.empty(self.n_local, dtype=np.int64)
        self.pos_of = np.empty(self.n_local, dtype=np.int64)
        for t in ElementType:
            ids = np.flatnonzero(types == t)
            if len(ids):
                g = _Group(t, ids, reference_operators(t, setup.N))
                self.groups[t] = g
                self.group_of[ids] = t
                self.pos_of[ids] = np.arange(len(ids))

        # per-element geometry
        self.jacobian = np.empty(self.n_local)
        self.a_ref = np.empty((self.n_local, 3))
        self.x0 = np.empty((self.n_local, 3))
        self.A = np.empty((self.n_local, 3, 3))
        for n in range(self.n_local):
            elem = mesh.elements[self.lo + n]
            x0, A = affine_map(elem.element_type, mesh.element_vertices(self.lo + n))
            self.x0[n], self.A[n] = x0, A
            self.jacobian[n] = elem.jacobian
            self.a_ref[n] = np.linalg.solve(A, a)
        for g in self.groups.values():
            g.J = self.jacobian[g.local_ids]
            g.a_ref = self.a_ref[g.local_ids]

        self._build_sides()
        self.state: dict[ElementType, np.ndarray] = {}
        self.reset_state()

    # ------------------------------------------------------------------ setup
    def owner(self, g: int) -> int:
        return int(np.searchsorted(self.offsets, g, side="right") - 1)

    def _build_sides(self):
        mesh = self.mesh
        N = self.setup.N
        slots = []
        an, boundary = [], []
        trace_members = defaultdict(list)
        send = defaultdict(list)
        recv = defaultdict(list)
        side_elem = []
        for k, side in enumerate(mesh.sides):
            m = side.master_elem
            s = side.slave_elem
            m_local = self.lo <= m < self.hi
            s_local = s is not None and self.lo <= s < self.hi
            if not (m_local or s_local):
                continue
            slot = len(slots)
            slots.append(k)
            em = mesh.elements[m]
            fm = side.faces[0]
            verts = mesh.nodes[[em.node_ids[i] for i in em.element_type.faces[fm]]]
            normal = face_normal(verts, np.asarray(em.barycenter))
            area = face_area(verts)
            an.append(float(np.dot(self.velocity, normal)))
            boundary.append(s is None)
            roles = [(m, em.element_type, fm, em.element_type.faces[fm], -1.0)]
            if s is not None:
                es = mesh.elements[s]
                fs = side.faces[1]
                ordering = tuple(es.element_type.faces[fs][p] for p in side.slave_perm)
                roles.append((s, es.element_type, fs, ordering, 1.0))
            for role, (e, etype, f, ordering, sign) in enumerate(roles):
                if self.lo <= e < self.hi:
                    ln = e - self.lo
                    coef = sign * area / self.jacobian[ln]
                    trace_members[(etype, f, tuple(ordering))].append((self.pos_of[ln], slot, role, coef))
                    other = 1 - role
                    if s is not None and not (self.lo <= roles[other][0] < self.hi):
                        send[self.owner(roles[other][0])].append((slot, role))
                        recv[self.owner(roles[other][0])].append((slot, other))
            side_elem.append(m - self.lo if m_local else s - self.lo)

        self.side_ids = np.asarray(slots, dtype=np.int64)
        self.n_sides = len(slots)
        self.side_to_local_elem = np.asarray(side_elem, dtype=np.int64)
        self.an = np.asarray(an)
        self.upwind_role = np.where(self.an >= 0, 0, 1)
        self.boundary_slots = np.flatnonzero(np.asarray(boundary, dtype=bool))
        self.trace_groups = []
        for key in sorted(trace_members, key=lambda k: (k[1], int(k[0]), k[2])):
            rows = trace_members[key]
            etype, f, ordering = key
            self.trace_groups.append((
                etype, f, reference_operators(etype, N).face(f, ordering),
                np.array([r[0] for r in rows], dtype=np.int64),
                np.array([r[1] for r in rows], dtype=np.int64),
                np.array([r[2] for r in rows], dtype=np.int64),
                np.array([r[3] for r in rows]),
            ))
        self.send_plan = {r: (np.array([p[0] for p in v]), np.array([p[1] for p in v])) for r, v in sorted(send.items())}
        self.recv_plan = {r: (np.array([p[0] for p in v]), np.array([p[1] for p in v])) for r, v in sorted(recv.items())}
        self.trace = np.zeros((self.n_sides, 2, self.setup.n_var, n_face_points(N)))

    @property
    def n_modal_elems(self) -> int:
        return int(sum(g.n for t, g in self.groups.items() if t.is_modal))

    @property
    def modal_flags(self) -> np.ndarray:
        return self.group_of != ElementType.HEX

    @property
    def neighbor_ranks(self) -> list[int]:
        return sorted(self.send_plan)

    # ------------------------------------------------------------------ state
    def reset_state(self):
        v, N = self.setup.n_var, self.setup.N
        for t, g in self.groups.items():
            if t is ElementType.HEX:
                self.state[t] = np.zeros((g.n, v, N + 1, N + 1, N + 1))
            else:
                self.state[t] = np.zeros((g.n, v, g.basis.n_nodes))

    def node_coordinates(self, t: ElementType) -> np.ndarray:
        g = self.groups[t]
        xi = g.basis.nodes
        return self.x0[g.local_ids][:, None, :] + np.einsum("eij,pj->epi", self.A[g.local_ids], xi)

    def interpolate(self, func):
        """Set the nodal state from ``func(points) -> (n_var, n_points)``."""
        for t, g in self.groups.items():
            x = self.node_coordinates(t)
            vals = np.asarray(func(x.reshape(-1, 3)), dtype=float).reshape(self.setup.n_var, g.n, -1)
            self.state[t] = np.ascontiguousarray(vals.transpose(1, 0, 2)).reshape(self.state[t].shape)

    def get_state(self) -> np.ndarray:
        U = np.zeros((self.n_local, self.setup.n_var, self.setup.slot_size))
        for t, g in self.groups.items():
            q = self.state[t].reshape(g.n, self.setup.n_var, -1)
            U[g.local_ids, :, :q.shape[2]] = q
        return U

    def set_state(self, U: np.ndarray):
        U = np.asarray(U, dtype=float)
        if U.shape != (self.n_local, self.setup.n_var, self.setup.slot_size):
            raise ValueError(f"state shape {U.shape} does not match local layout")
        for t, g in self.groups.items():
            shape = self.state[t].shape
            n_nodes = int(np.prod(shape[2:]))
            self.state[t] = np.ascontiguousarray(U[g.local_ids, :, :n_nodes]).reshape(shape)

    def total_integral(self) -> np.ndarray:
        """Exact integral of the local solution, per variable, summed in element order."""
        per_elem = np.zeros((self.n_local, self.setup.n_var))
        for t, g in self.groups.items():
            q = self.state[t].reshape(g.n, self.setup.n_var, -1)
            per_elem[g.local_ids] = np.einsum("evn,n->ev", q, g.ops.integral) * g.J[:, None]
        total = np.zeros(self.setup.n_var)
        for row in per_elem:
            total += row
        return total

    # --------------------------------------------------------------- kernels
    def volume_kernel(self, X) -> dict:
        R = {}
        for t, g in self.groups.items():
            x = X[t]
            a = g.a_ref
            if t is ElementType.HEX:
                D = g.ops.Dhat
                r = a[:, 0, None, None, None, None] * np.einsum("im,evmjk->evijk", D, x)
                r += a[:, 1, None, None, None, None] * np.einsum("jm,evimk->evijk", D, x)
                r += a[:, 2, None, None, None, None] * np.einsum("km,evijm->evijk", D, x)
            else:
                K = g.ops.K
                r = a[:, 0, None, None] * np.einsum("ij,evj->evi", K[0], x)
                r += a[:, 1, None, None] * np.einsum("ij,evj->evi", K[1], x)
                r += a[:, 2, None, None] * np.einsum("ij,evj->evi", K[2], x)
            R[t] = r
        return R

    def compute_traces(self, X):
        T = self.trace
        for etype, f, face, pos, slot, role, _ in self.trace_groups:
            x = X[etype][pos]
            if etype is ElementType.HEX:
                sub = "evijk"
                v = np.einsum(f"{sub},{sub[2 + face.axis]}->{sub.replace(sub[2 + face.axis], '')}", x, face.trace_1d)
                v = v.reshape(len(pos), self.setup.n_var, -1)[:, :, face.index]
            else:
                v = np.einsum("pm,evm->evp", face.E, x)
            T[slot, role] = v
        return T

    def halo_payload(self) -> dict[int, np.ndarray]:
        return {r: self.trace[slots, roles] for r, (slots, roles) in self.send_plan.items()}

    def accept_halo(self, received: dict[int, np.ndarray]):
        for r, (slots, roles) in self.recv_plan.items():
            if r not in received:
                raise SynchronizationError(f"rank {self.rank}: missing halo data from rank {r}")
            data = received[r]
            if data.shape[0] != len(slots):
                raise TopologyError(f"rank {self.rank}: halo from rank {r} has {data.shape[0]} faces, "
                                           f"expected {len(slots)}")
            self.trace[slots, roles] = data

    def surface_kernel(self, R):
        """Upwind flux on every local side, lifted into the residuals in face order."""
        T = self.trace
        if len(self.boundary_slots):
            T[self.boundary_slots, 1] = T[self.boundary_slots, 0]
        F = T[np.arange(self.n_sides), self.upwind_role] * self.an[:, None, None]
        for etype, f, face, pos, slot, role, coef in self.trace_groups:
            flux = F[slot]
            if etype is ElementType.HEX:
                grid = flux[:, :, face.inverse].reshape(len(pos), self.setup.n_var, self.setup.N + 1, -1)
                contrib = np.einsum("i,evjk->evijk", face.lift_1d, grid)
                contrib = np.moveaxis(contrib, 2, 2 + face.axis)
                R[etype][pos] += coef[:, None, None, None, None] * contrib
            else:
                R[etype][pos] += coef[:, None, None] * np.einsum("mp,evp->evm", face.L, flux)
        return R

    # ------------------------------------------------------------ stepping
    def residual(self, X, timers: TimerSet, halo=None):
        with timers.section(Category.DG_SIDES):
            self.compute_traces(X)
            if halo is not None:
                halo.post(self.halo_payload())
        with timers.section(Category.DG_ELEMS):
            R = self.volume_kernel(X)
        if halo is not None:
            self.accept_halo(halo.wait())
        elif self.recv_plan:
            raise SynchronizationError(f"rank {self.rank}: partition has remote neighbours but no halo")
        with timers.section(Category.DG_SIDES):
            self.surface_kernel(R)
        return R

    def project(self) -> dict:
        return {t: modal_project(self.state[t], g.basis, g.J) for t, g in self.groups.items() if t.is_modal}

    def check_finite(self, step):
        for x in self.state.values():
            if not np.all(np.isfinite(x)):
                raise DivergenceError(step)


def advance_timestep(disc: LocalDiscretization, dt: float, timers: TimerSet | None = None,
                     halo=None, step: int = 0, t: float = 0.0) -> TimerSet:
    """One full LSERK step on a local partition.

    Hexahedra update nodal values directly.  Modal element types keep their
    LSERK registers in modal space: project once, then per stage project the
    nodal residual, update, and reconstruct the nodal state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    timers = timers if timers is not None else TimerSet(active=False)
    scheme = disc.setup.scheme
    modal = [k for k in disc.groups if k.is_modal]
    X = dict(disc.state)
    if modal:
        with timers.section(Category.DG_MODAL):
            Xm = disc.project()
    else:
        Xm = {}
    du = {k: np.zeros_like(Xm[k] if k.is_modal else X[k]) for k in X}
    # blow-up is reported by check_finite below, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        _stages(disc, scheme, dt, X, Xm, du, modal, timers, halo)
    disc.state.update(X)
    disc.check_finite(step)
    timers.count(n_elems=disc.n_local, n_sides=disc.n_sides, n_modal_elems=disc.n_modal_elems)
    return timers


def _stages(disc, scheme, dt, X, Xm, du, modal, timers, halo):
    for a, b, c in zip(scheme.a, scheme.b, scheme.c):
        R = disc.residual(X, timers, halo)
        if modal:
            with timers.section(Category.DG_MODAL):
                for k in modal:
                    g = disc.groups[k]
                    R[k] = modal_project(R[k], g.basis, g.J)
        for k in X:
            du[k] = a * du[k] + dt * R[k]
            if k.is_modal:
                Xm[k] = Xm[k] + b * du[k]
            else:
                X[k] = X[k] + b * du[k]
        if modal:
            with timers.section(Category.DG_MODAL):
                for k in modal:
                    X[k] = modal_reconstruct(Xm[k], disc.groups[k].basis)


def element_length_scale(mesh: Mesh) -> np.ndarray:
    """Twice the inradius-like ratio 3V/A, per element."""
    out = np.empty(mesh.n_elems)
    for n, e in enumerate(mesh.elements):
        verts = mesh.element_vertices(n)
        area = sum(face_area(verts[list(f)]) for f in e.element_type.faces)
        out[n] = 6.0 * e.jacobian * e.element_type.ref_volume / area
    return out


def stable_dt(mesh: Mesh, setup: AdvectionSetup, cfl: float = 1.0) -> float:
    """Conservative explicit time step ``cfl * h_min / (|a| (N+1)^2)``."""
    speed = float(np.linalg.norm(setup.velocity))
    if speed == 0:
        return float("inf")
    h = float(element_length_scale(mesh).min())
    return cfl * h / (speed * (setup.N + 1) ** 2)
