#!/usr/bin/env python3
"""Regenerates data/deepfashion2_schema.json.

Keypoints with identical names share a group channel. Names prefixed with
right_/left_ form horizontal flip pairs; all other groups are flip-invariant.
"""
import json
import pathlib


def sided(names):
    right = [f"right_{n}" for n in names]
    left = [f"left_{n}" for n in reversed(names)]
    return right, left


def top(neck, side, center):
    r, l = sided(side)
    return neck + r + [center] + l


def outwear(side):
    front = ["neck", "neck_front", "lapel", "placket_chest", "placket_waist", "front_hem"]
    fr, fl = sided(front)
    sr, sl = sided(side)
    return ["collar_center"] + fr + sr + sl + fl


NECK = ["collar_center", "right_neck", "right_neck_front", "neckline_front_center",
        "left_neck_front", "left_neck"]
SHORT_SLEEVE = ["shoulder", "sleeve_outer_upper", "short_cuff_outer", "short_cuff_inner",
                "sleeve_inner_upper", "armpit"]
LONG_SLEEVE = ["shoulder", "sleeve_outer_upper", "sleeve_outer_elbow", "sleeve_outer_forearm",
               "long_cuff_outer", "long_cuff_inner", "sleeve_inner_forearm",
               "sleeve_inner_elbow", "sleeve_inner_upper", "armpit"]
TOP_BODY = ["waist", "hip", "top_hem"]
DRESS_BODY = ["waist", "hip", "dress_thigh", "dress_knee", "dress_hem"]

CLASSES = [
    (1, "short_sleeve_top", top(NECK, SHORT_SLEEVE + TOP_BODY, "top_hem_center")),
    (2, "long_sleeve_top", top(NECK, LONG_SLEEVE + TOP_BODY, "top_hem_center")),
    (3, "short_sleeve_outwear", outwear(SHORT_SLEEVE + TOP_BODY)),
    (4, "long_sleeve_outwear", outwear(LONG_SLEEVE + TOP_BODY)),
    (5, "vest", top(NECK, ["shoulder", "armpit", "waist", "top_hem"], "top_hem_center")),
    (6, "sling", top(NECK, ["shoulder", "armpit", "waist", "top_hem"], "top_hem_center")),
    (7, "shorts", ["right_waist", "waist_center", "left_waist", "right_hip", "right_knee_outer",
                   "right_knee_inner", "crotch", "left_knee_inner", "left_knee_outer",
                   "left_hip"]),
    (8, "trousers", ["right_waist", "waist_center", "left_waist", "right_hip",
                     "right_knee_outer", "right_ankle_outer", "right_ankle_inner",
                     "right_knee_inner", "crotch", "left_knee_inner", "left_ankle_inner",
                     "left_ankle_outer", "left_knee_outer", "left_hip"]),
    (9, "skirt", ["right_waist", "waist_center", "left_waist", "right_hip", "right_dress_hem",
                  "dress_hem_center", "left_dress_hem", "left_hip"]),
    (10, "short_sleeve_dress", top(NECK, SHORT_SLEEVE + DRESS_BODY, "dress_hem_center")),
    (11, "long_sleeve_dress", top(NECK, LONG_SLEEVE + DRESS_BODY, "dress_hem_center")),
    (12, "vest_dress", top(NECK, ["shoulder", "armpit"] + DRESS_BODY[:1] + DRESS_BODY[2:],
                           "dress_hem_center")),
    (13, "sling_dress", top(NECK, ["shoulder", "armpit"] + DRESS_BODY[:1] + DRESS_BODY[2:],
                            "dress_hem_center")),
]

EXPECTED_COUNTS = [25, 33, 31, 39, 15, 15, 10, 14, 8, 29, 37, 19, 19]


def main():
    for (cid, name, kps), n in zip(CLASSES, EXPECTED_COUNTS):
        assert len(kps) == n, (name, len(kps), n)
        assert len(set(kps)) == len(kps), name
        for k in kps:
            if k.startswith("right_"):
                assert "left_" + k[6:] in kps, (name, k)
    group_of = {}
    members = []
    for cid, _, kps in CLASSES:
        for i, k in enumerate(kps):
            if k not in group_of:
                group_of[k] = len(group_of)
                members.append([])
            members[group_of[k]].append([cid, i])
    assert sum(EXPECTED_COUNTS) == 294
    assert len(group_of) == 62, len(group_of)
    pairs = [[g, group_of["left_" + k[6:]]] for k, g in group_of.items() if k.startswith("right_")]
    doc = {
        "classes": [{"id": c, "name": n, "keypoints": k} for c, n, k in CLASSES],
        "groups": [{"group": g, "name": k, "members": members[g]} for k, g in group_of.items()],
        "flip_pairs": pairs,
        "oks_constants": [0.05] * len(group_of),
    }
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "deepfashion2_schema.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out}: {len(group_of)} groups, {len(pairs)} flip pairs")


if __name__ == "__main__":
    main()
