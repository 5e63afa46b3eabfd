#!/usr/bin/env python3
"""Write the benchmark datasets as CSV files readable by `sc`.

Usage: python3 scripts/fetch_datasets.py OUT_DIR [name ...]

Each file has a header row of feature names followed by a `label` column
(class name for classification sets, real target for regression sets).
iris, wine, breast_cancer, digits and diabetes ship with scikit-learn;
covtype, california_housing and ionosphere are downloaded by scikit-learn
on first use and therefore need network access.
"""
import csv
import os
import sys

from sklearn import datasets


def _bunch(name):
    if name == "iris":
        return datasets.load_iris()
    if name == "wine":
        return datasets.load_wine()
    if name == "breast_cancer":
        return datasets.load_breast_cancer()
    if name == "digits":
        return datasets.load_digits()
    if name == "diabetes":
        return datasets.load_diabetes()
    if name == "california_housing":
        return datasets.fetch_california_housing()
    if name == "covtype":
        return datasets.fetch_covtype()
    if name == "ionosphere":
        return datasets.fetch_openml("ionosphere", version=1, as_frame=False)
    raise SystemExit(f"unknown dataset {name}")


def write(name, out_dir):
    b = _bunch(name)
    X, y = b.data, b.target
    names = getattr(b, "feature_names", None)
    if names is None or len(names) != X.shape[1]:
        names = [f"f{i}" for i in range(X.shape[1])]
    target_names = getattr(b, "target_names", None)
    regression = name in ("diabetes", "california_housing")
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["label"])
        for row, label in zip(X, y):
            if regression:
                lab = repr(float(label))
            elif target_names is not None and name in ("iris", "wine", "breast_cancer"):
                lab = str(target_names[int(label)])
            else:
                lab = str(label)
            w.writerow([repr(float(v)) for v in row] + [lab])
    print(f"wrote {path} ({X.shape[0]} rows, {X.shape[1]} features)")


def main():
    if len(sys.argv) < 2:
        raise SystemExit(__doc__)
    out_dir = sys.argv[1]
    os.makedirs(out_dir, exist_ok=True)
    names = sys.argv[2:] or ["iris", "wine", "breast_cancer", "digits", "diabetes",
                             "ionosphere", "california_housing", "covtype"]
    for name in names:
        write(name, out_dir)


if __name__ == "__main__":
    main()
