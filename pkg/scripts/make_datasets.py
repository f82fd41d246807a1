"""Regenerate the bundled UCI CSV files and their column specs.

Iris, Wine and Breast Cancer Wisconsin (diagnostic) come from the copies
shipped with scikit-learn; Balance Scale is fully determined by its rule
(5**4 attribute combinations) and is enumerated directly. Only this script
needs scikit-learn.
"""

import csv
import itertools
import json
from pathlib import Path

from sklearn import datasets

OUT = Path(__file__).resolve().parents[1] / "src" / "mixupe" / "datasets"


def write(name, header, rows, columns):
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    spec = {"spec_version": 1, "has_header": True, "missing_tokens": ["?", "NA", ""], "columns": columns}
    with open(OUT / f"{name}.json", "w") as fh:
        json.dump(spec, fh, indent=2)
        fh.write("\n")


def from_sklearn(name, bunch, label_names):
    feats = [f.replace(" ", "_").replace("(", "").replace(")", "") for f in bunch.feature_names]
    rows = [[repr(float(v)) for v in x] + [label_names[t]] for x, t in zip(bunch.data, bunch.target)]
    cols = [{"name": f, "kind": "continuous"} for f in feats]
    cols.append({"name": "class", "kind": "label", "categories": list(label_names)})
    write(name, feats + ["class"], rows, cols)


def balance_scale():
    rows = []
    for lw, ld, rw, rd in itertools.product(range(1, 6), repeat=4):
        left, right = lw * ld, rw * rd
        cls = "L" if left > right else "R" if right > left else "B"
        rows.append([cls, lw, ld, rw, rd])
    names = ["left_weight", "left_distance", "right_weight", "right_distance"]
    cols = [{"name": "class", "kind": "label", "categories": ["L", "B", "R"]}]
    cols += [{"name": n, "kind": "categorical", "categories": ["1", "2", "3", "4", "5"]} for n in names]
    write("balance_scale", ["class"] + names, rows, cols)


if __name__ == "__main__":
    from_sklearn("iris", datasets.load_iris(), ["setosa", "versicolor", "virginica"])
    from_sklearn("wine", datasets.load_wine(), ["class_0", "class_1", "class_2"])
    from_sklearn("breast_cancer", datasets.load_breast_cancer(), ["malignant", "benign"])
    balance_scale()
