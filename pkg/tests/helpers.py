"""Shared builders for test layouts."""

from __future__ import annotations

import math

import numpy as np

from asisim.world import cast_rays, load_layout


def room_text(w: float = 10.0, h: float = 10.0, door: float = 2.0, interior: list | None = None,
              declared_area: float | None = None, extra_hiding: int = 0, spawn=None, exits=True) -> str:
    """Rectangular room: entrance centred on the south wall, exit 1 west, exit 2 east."""
    cx, cy = w / 2, h / 2
    d = door / 2
    walls = [
        ((0, 0), (cx - d, 0)), ((cx + d, 0), (w, 0)),
        ((w, 0), (w, cy - d)), ((w, cy + d), (w, h)),
        ((w, h), (0, h)),
        ((0, h), (0, cy + d)), ((0, cy - d), (0, 0)),
    ]
    lines = ["units: meters", f"declared_area_m2: {declared_area if declared_area is not None else w * h}", "walls:"]
    lines += [f"  - {{a: [{a[0]}, {a[1]}], b: [{b[0]}, {b[1]}], kind: exterior}}" for a, b in walls]
    for a, b in interior or []:
        lines.append(f"  - {{a: [{a[0]}, {a[1]}], b: [{b[0]}, {b[1]}], kind: interior}}")
    lines.append(f"entrance: {{a: [{cx - d}, 0], b: [{cx + d}, 0]}}")
    lines.append("exits:")
    lines.append(f"  - {{id: 1, a: [0, {cy - d}], b: [0, {cy + d}]}}")
    lines.append(f"  - {{id: 2, a: [{w}, {cy - d}], b: [{w}, {cy + d}]}}")
    m = min(w, h) * 0.15
    corners = [(m, m), (w - m, m), (m, h - m), (w - m, h - m)] + [(cx, h - m)] * extra_hiding
    lines.append("hiding_places:")
    lines += [f"  - {{center: [{x}, {y}], radius: 0.5}}" for x, y in corners]
    sx, sy = spawn or (cx, min(2.5, h / 4))
    lines.append(f"spawn_zone: {{center: [{sx}, {sy}], side: 2.0}}")
    return "\n".join(lines) + "\n"


def room(w: float = 10.0, h: float = 10.0, **kw):
    return load_layout(room_text(w, h, **kw))


def random_scene(rng):
    """Origin at 0, random unit direction, 2-7 tagged walls and up to 5 discs."""
    walls = []
    for _ in range(rng.integers(2, 8)):
        a = rng.uniform(-25, 25, 2)
        b = a + rng.uniform(-12, 12, 2)
        walls.append((a, b, int(rng.integers(1, 3))))
    targets = [rng.uniform(-20, 20, 2) for _ in range(rng.integers(0, 6))]
    ang = rng.uniform(-math.pi, math.pi)
    return np.zeros(2), np.array([math.cos(ang), math.sin(ang)]), walls, targets


def cast_scene(origin, d, walls, targets):
    a = np.array([w[0] for w in walls])
    b = np.array([w[1] for w in walls])
    tag = np.array([w[2] for w in walls])
    dist, tg = cast_rays(origin, d[None], a, b, tag, np.array(targets).reshape(-1, 2), 0.3, 20.0)
    return int(tg[0]), float(dist[0])
