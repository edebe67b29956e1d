#!/usr/bin/env python3
"""Recompute the `evaluate` metrics with scikit-learn and statsmodels.

usage: oracle_evaluate.py <annotations.csv> <classifications.jsonl>
"""

import csv
import json
import sys
from collections import defaultdict

import numpy as np
from sklearn.metrics import accuracy_score, cohen_kappa_score, f1_score
from statsmodels.stats.inter_rater import aggregate_raters, fleiss_kappa


def main(ann_path, cls_path):
    raters = defaultdict(dict)
    with open(ann_path) as f:
        for row in csv.DictReader(f):
            raters[row["annotator_id"]][row["explanation_id"]] = row["label"]
    model = {}
    with open(cls_path) as f:
        for line in f:
            if line.strip():
                r = json.loads(line)
                model[r["id"]] = r["label"]
    ids = sorted(i for i in raters["CONSENSUS"] if i in model)
    h1, h2, cons = raters["H1"], raters["H2"], raters["CONSENSUS"]

    labels = sorted({l for m in (h1, h2, model) for l in m.values()})
    index = {l: i for i, l in enumerate(labels)}
    table = np.array([[index[h1[i]], index[h2[i]], index[model[i]]] for i in ids])
    fk = fleiss_kappa(aggregate_raters(table)[0], method="fleiss")

    rows = []
    for name, subset, gold in [
        ("H1", ids, h1),
        ("H2", ids, h2),
        ("CONSENSUS", ids, cons),
        ("H1&H2", [i for i in ids if h1[i] == h2[i]], h1),
    ]:
        y = [gold[i] for i in subset]
        p = [model[i] for i in subset]
        rows.append({
            "compared_with": name,
            "n": len(subset),
            "accuracy": 100.0 * accuracy_score(y, p),
            "macro_f1": f1_score(y, p, average="macro", zero_division=0),
            "cohen_kappa": cohen_kappa_score(y, p),
            "fleiss_kappa": fk,
        })
    print(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main(*sys.argv[1:3])
