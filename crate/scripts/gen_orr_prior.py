#!/usr/bin/env python3
"""Regenerates crates/core/data/orr_prior.csv and lexicon.csv from the category affinities below."""
import csv
import hashlib
import os

RECEPTACLES = [
    "kitchen|countertop", "kitchen|dining_table", "kitchen|fridge", "kitchen|cabinet",
    "living|sofa", "living|coffee_table", "living|tv_stand", "living|cabinet",
    "bedroom|bed", "bedroom|nightstand", "bedroom|desk", "bedroom|wardrobe",
    "bathroom|sink", "bathroom|bathtub", "bathroom|shelf", "bathroom|cabinet",
]

AFFINITY = {
    "food": {"kitchen|fridge": 1.0, "kitchen|countertop": 0.8, "kitchen|dining_table": 0.7,
             "kitchen|cabinet": 0.4, "living|coffee_table": 0.2},
    "kitchenware": {"kitchen|countertop": 1.0, "kitchen|cabinet": 0.9, "kitchen|dining_table": 0.5},
    "tableware": {"kitchen|dining_table": 1.0, "kitchen|cabinet": 0.85, "kitchen|countertop": 0.7,
                  "living|coffee_table": 0.3, "bedroom|desk": 0.15},
    "decor": {"living|tv_stand": 0.9, "living|coffee_table": 0.8, "living|cabinet": 0.6,
              "bedroom|nightstand": 0.5, "bedroom|desk": 0.3, "bathroom|shelf": 0.2},
    "electronics": {"bedroom|desk": 1.0, "living|coffee_table": 0.8, "living|tv_stand": 0.7,
                    "bedroom|nightstand": 0.6, "living|cabinet": 0.4, "living|sofa": 0.3},
    "stationery": {"bedroom|desk": 1.0, "living|coffee_table": 0.6, "bedroom|nightstand": 0.5,
                   "living|cabinet": 0.4, "bedroom|bed": 0.2},
    "soft": {"bedroom|bed": 1.0, "living|sofa": 0.9, "bedroom|wardrobe": 0.6, "living|cabinet": 0.2},
    "clothing": {"bedroom|wardrobe": 1.0, "bedroom|bed": 0.6, "living|sofa": 0.25},
    "toiletries": {"bathroom|sink": 1.0, "bathroom|cabinet": 0.9, "bathroom|shelf": 0.8,
                   "bathroom|bathtub": 0.6},
    "cleaning": {"bathroom|cabinet": 0.8, "kitchen|cabinet": 0.7, "bathroom|sink": 0.6,
                 "kitchen|countertop": 0.5, "bathroom|shelf": 0.4},
}

OBJECTS = [
    ("apple", "food"), ("bread", "food"), ("lettuce", "food"), ("tomato", "food"),
    ("egg", "food"), ("potato", "food"),
    ("pan", "kitchenware"), ("pot", "kitchenware"), ("kettle", "kitchenware"),
    ("spatula", "kitchenware"), ("knife", "kitchenware"),
    ("bowl", "tableware"), ("plate", "tableware"), ("mug", "tableware"), ("cup", "tableware"),
    ("fork", "tableware"), ("spoon", "tableware"),
    ("vase", "decor"), ("statue", "decor"), ("candle", "decor"), ("picture_frame", "decor"),
    ("remote_control", "electronics"), ("laptop", "electronics"), ("cell_phone", "electronics"),
    ("alarm_clock", "electronics"),
    ("book", "stationery"), ("pen", "stationery"), ("notebook", "stationery"),
    ("pillow", "soft"), ("blanket", "soft"), ("teddy_bear", "soft"),
    ("shirt", "clothing"), ("jacket", "clothing"), ("towel", "clothing"),
    ("soap_bar", "toiletries"), ("toothbrush", "toiletries"), ("shampoo", "toiletries"),
    ("toilet_paper", "toiletries"),
    ("sponge", "cleaning"), ("spray_bottle", "cleaning"),
]


def jitter(obj, rec):
    digest = hashlib.sha256(f"{obj}/{rec}".encode()).digest()
    return (digest[0] / 255.0) * 2.0 - 1.0


def main():
    data = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")
    with open(os.path.join(data, "lexicon.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["word", "concept"])
        for obj, cat in OBJECTS:
            w.writerow([obj, cat])
    with open(os.path.join(data, "orr_prior.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["object_label", "room_receptacle_label", "class", "score"])
        for obj, cat in OBJECTS:
            for rec in RECEPTACLES:
                a = AFFINITY[cat].get(rec, 0.0)
                if a > 0.0:
                    s = min(1.0, max(0.05, a * (1.0 + 0.04 * jitter(obj, rec))))
                    w.writerow([obj, rec, "probable", f"{s:.3f}"])
                else:
                    w.writerow([obj, rec, "implausible", "0.000"])


if __name__ == "__main__":
    main()
