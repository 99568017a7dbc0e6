"""Regenerate src/asisim/data/default_office.layout.

60 m x 40 m single-storey office (2400 m2): entrance lobby on the south
side, an east-west corridor, two south wings and four north rooms.
Exits 1 and 2 sit in the rooms either side of the lobby, 5 and 6 close
the corridor ends, and 3 and 4 sit in the far north corners.
"""

from pathlib import Path

import yaml

W, H = 60.0, 40.0
OUT = Path(__file__).resolve().parents[1] / "src" / "asisim" / "data" / "default_office.layout"

ENTRANCE = ((28.0, 0.0), (32.0, 0.0))
EXITS = {
    1: ((19.0, 0.0), (21.0, 0.0)),
    2: ((44.0, 0.0), (46.0, 0.0)),
    3: ((6.0, 40.0), (8.0, 40.0)),
    4: ((50.0, 40.0), (52.0, 40.0)),
    5: ((0.0, 18.0), (0.0, 20.0)),
    6: ((60.0, 18.0), (60.0, 20.0)),
}
HIDING = [(5.0, 5.0), (55.0, 5.0), (22.0, 34.0), (38.0, 34.0)]
SPAWN = {"center": [30.0, 4.0], "side": 4.0}


def wall_with_gaps(a, b, gaps):
    """Split the axis-aligned run a->b around gap intervals (along the run's axis)."""
    axis = 0 if a[1] == b[1] else 1
    lo, hi = sorted((a[axis], b[axis]))
    cuts = [lo]
    for g0, g1 in sorted(gaps):
        cuts += [g0, g1]
    cuts.append(hi)
    out = []
    for s, e in zip(cuts[::2], cuts[1::2]):
        if e - s > 1e-9:
            p, q = list(a), list(a)
            p[axis], q[axis] = s, e
            out.append((tuple(p), tuple(q)))
    return out


def main():
    walls = []

    def add(segs, kind):
        walls.extend({"a": list(s), "b": list(e), "kind": kind} for s, e in segs)

    portals = {"s": [ENTRANCE, EXITS[1], EXITS[2]], "n": [EXITS[3], EXITS[4]], "w": [EXITS[5]], "e": [EXITS[6]]}
    add(wall_with_gaps((0, 0), (W, 0), [(p[0][0], p[1][0]) for p in portals["s"]]), "exterior")
    add(wall_with_gaps((W, 0), (W, H), [(p[0][1], p[1][1]) for p in portals["e"]]), "exterior")
    add(wall_with_gaps((0, H), (W, H), [(p[0][0], p[1][0]) for p in portals["n"]]), "exterior")
    add(wall_with_gaps((0, 0), (0, H), [(p[0][1], p[1][1]) for p in portals["w"]]), "exterior")

    # corridor south wall, lobby open between x=24 and x=36
    add(wall_with_gaps((0, 16), (24, 16), [(9.0, 10.5), (13.5, 15.0)]), "interior")
    add(wall_with_gaps((36, 16), (W, 16), [(45.0, 46.5), (49.5, 51.0)]), "interior")
    # lobby side doors open into the rooms holding exits 1 and 2
    add(wall_with_gaps((24, 0), (24, 16), [(6.0, 7.5)]), "interior")
    add(wall_with_gaps((36, 0), (36, 16), [(6.0, 7.5)]), "interior")
    add([((12, 0), (12, 16)), ((48, 0), (48, 16))], "interior")
    # corridor north wall and north rooms
    add(wall_with_gaps((0, 22), (W, 22), [(10.0, 11.5), (25.0, 26.5), (33.5, 35.0), (48.5, 50.0)]), "interior")
    add([((x, 22), (x, H)) for x in (15.0, 30.0, 45.0)], "interior")

    doc = {
        "name": "default_office",
        "units": "meters",
        "declared_area_m2": W * H,
        "walls": walls,
        "entrance": {"a": list(ENTRANCE[0]), "b": list(ENTRANCE[1])},
        "exits": [{"id": i, "a": list(a), "b": list(b)} for i, (a, b) in EXITS.items()],
        "hiding_places": [{"center": list(c), "radius": 1.0} for c in HIDING],
        "spawn_zone": SPAWN,
    }
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
    OUT.write_text("# generated by scripts/make_default_layout.py\n" + text, encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
