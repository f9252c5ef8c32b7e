"""Structured triangulations of the unit square and their uniform refinement."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    cells : ndarray, shape (nc, 3)
        Counter-clockwise vertex triples.
    edges : ndarray, shape (ne, 2)
        Sorted vertex pairs.
    cell_edges : ndarray, shape (nc, 3)
        Local edge ``k`` is the edge opposite local vertex ``k``.
    edge_cells : ndarray, shape (ne, 2)
        Adjacent cells, ``-1`` in the second slot on the boundary.
    boundary_vertex_flags, boundary_edge_flags : ndarray of bool
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    edge_cells: np.ndarray
    boundary_vertex_flags: np.ndarray
    boundary_edge_flags: np.ndarray

    @classmethod
    def from_cells(cls, vertices, cells) -> "Mesh":
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        nc = len(cells)
        local = cells[:, [[1, 2], [2, 0], [0, 1]]]  # (nc, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: an edge is shared by more than two cells")
        cell_edges = inverse.reshape(nc, 3)
        edge_cells = -np.ones((len(edges), 2), dtype=np.int64)
        owner = np.repeat(np.arange(nc), 3)
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_cells[inverse[order][first], 0] = owner[order][first]
        edge_cells[inverse[order][~first], 1] = owner[order][~first]
        bedge = edge_cells[:, 1] < 0
        bvert = np.zeros(len(vertices), dtype=bool)
        bvert[edges[bedge].ravel()] = True
        arrays = [vertices, cells, edges, cell_edges, edge_cells, bvert, bedge]
        for a in arrays:
            a.setflags(write=False)
        return cls(*arrays)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def cell_diameters(self) -> np.ndarray:
        return self.edge_lengths()[self.cell_edges].max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters().max())

    def inscribed_diameters(self) -> np.ndarray:
        perimeter = self.edge_lengths()[self.cell_edges].sum(axis=1)
        return 4.0 * np.abs(self.signed_areas()) / perimeter

    def quasi_uniformity(self) -> float:
        """Max cell diameter over min inscribed-circle diameter."""
        return float(self.cell_diameters().max() / self.inscribed_diameters().min())

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_cells

    def check(self) -> None:
        """Raise ``ValueError`` if a structural invariant is violated."""
        if np.any(self.signed_areas() <= 0.0):
            raise ValueError("cells with non-positive signed area")
        nshare = (self.edge_cells >= 0).sum(axis=1)
        if np.any(nshare[self.boundary_edge_flags] != 1) or np.any(
            nshare[~self.boundary_edge_flags] != 2
        ):
            raise ValueError("mesh is not conforming")
        if self.euler_characteristic() != 1:
            raise ValueError("Euler relation V - E + C = 1 violated")

    def to_json(self, path=None) -> str:
        text = json.dumps(
            {"vertices": self.vertices.tolist(), "cells": self.cells.tolist()}, indent=None
        )
        if path is not None:
            Path(path).write_text(text)
        return text


def build_structured(n: int, a: float = 1.0, b: float = 1.0) -> Mesh:
    """Uniform ``n x n`` grid of squares, each cut along the same diagonal.

    ``a`` and ``b`` stretch the unit square to the rectangle (0, a) x (0, b).
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)  # vertex (i, j) -> j * (n + 1) + i
    vertices = np.column_stack([a * X.ravel(), b * Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_cells(vertices, cells)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    v0, v1, v2 = mesh.cells.T
    m0, m1, m2 = (nv + mesh.cell_edges).T
    children = np.stack(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh.from_cells(vertices, children)
