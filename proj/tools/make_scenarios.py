#!/usr/bin/env python3
"""Regenerates the bundled scenario files in data/scenarios/."""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "scenarios"


def r(x):
    return round(x, 6)


def single_wall():
    # The PA sits 1.5 m from the wall, so its VA is close and the start prior
    # pins the rotation of the map about the PA. The agent passes below the
    # PA on a gently bending track; the bend breaks the mirror ambiguity of a
    # straight track.
    steps, speed = 50, 0.12
    heading, turn = 0.0, math.radians(-30.0) / (steps - 1)
    x, y = -2.5, -1.2
    traj = []
    for _ in range(steps):
        traj.append([r(x), r(y)])
        x += speed * math.cos(heading)
        y += speed * math.sin(heading)
        heading += turn
    return {
        "description": "One PA and one reflecting wall; 50-step curved track.",
        "bounds": [-12.0, -10.0, 12.0, 10.0],
        "segments": [[-12.0, 1.5, 12.0, 1.5, 0]],
        "pas": [[0.0, 0.0]],
        "trajectory": traj,
        "max_step": 0.5,
    }


def room_demo():
    # 14 m x 9 m room with an alcove on the east side, two PAs and a
    # closed-loop track of 679 steps at roughly 0.06 m/step.
    walls = [
        [0.0, 0.0, 14.0, 0.0],
        [14.0, 0.0, 14.0, 3.0],
        [14.0, 3.0, 16.0, 3.0],
        [16.0, 3.0, 16.0, 6.0],
        [16.0, 6.0, 14.0, 6.0],
        [14.0, 6.0, 14.0, 9.0],
        [14.0, 9.0, 0.0, 9.0],
        [0.0, 9.0, 0.0, 0.0],
    ]
    segments = [w + [i] for i, w in enumerate(walls)]
    corners = [(2.0, 2.0), (12.0, 2.0), (15.0, 4.5), (12.0, 7.0), (2.0, 7.0), (2.0, 2.0)]
    lengths = [math.dist(corners[i], corners[i + 1]) for i in range(len(corners) - 1)]
    total = sum(lengths)
    steps = 679
    traj = []
    for k in range(steps):
        s = total * k / steps
        i = 0
        while s > lengths[i]:
            s -= lengths[i]
            i += 1
        (x0, y0), (x1, y1) = corners[i], corners[i + 1]
        t = s / lengths[i]
        traj.append([r(x0 + t * (x1 - x0)), r(y0 + t * (y1 - y0))])
    return {
        "description": "Approximate indoor demo: rectangular room with an alcove, two PAs, 679 steps. "
        "Layout chosen by hand to resemble a typical office floor plan; not a copy of any published map.",
        "bounds": [-16.0, -9.0, 32.0, 18.0],
        "segments": segments,
        "pas": [[4.0, 4.5], [10.0, 5.5]],
        "trajectory": traj,
        "max_step": 0.5,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("single_wall.json", single_wall()), ("room_demo.json", room_demo())):
        (OUT / name).write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
