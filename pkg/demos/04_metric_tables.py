"""
Recomputing reported scores
===========================

Macro F1 is the mean of the per-class F1 scores and F1 is the harmonic mean
of precision and sensitivity. Checking published rows against those
identities is a cheap sanity test for any results table.
"""

from lungscan.metrics import ClassCounts, ConfusionCounts, classification_report, f1, macro_f1

rows = [
    ("mdap", 87.87, (78.80, 96.95)),
    ("mdap+pipeline", 89.87, (81.50, 97.25)),
    ("fdvts", 89.11, (80.92, 97.31)),
    ("fdvts+pipeline", 90.61, (82.22, 97.51)),
    ("acvlab", 89.11, (80.78, 97.45)),
    ("acvlab+pipeline", 90.61, (82.08, 97.65)),
    ("racnet-unsegmented", 93.06, (92.18, 93.95)),
    ("racnet-conventional", 95.06, (94.18, 95.95)),
    ("racnet+pipeline", 96.81, (95.68, 97.95)),
]
for name, macro, per_class in rows:
    got = macro_f1(per_class)
    flag = "ok" if abs(got - macro) <= 0.01 else "MISMATCH"
    print(f"{name:20s} reported {macro:6.2f}  mean of classes {got:7.3f}  {flag}")

# precision / sensitivity / F1 triples
for p, s, reported in [(79.43, 98.43, 87.92), (92.69, 90.85, 91.76), (96.12, 94.86, 95.49)]:
    print(f"f1({p}, {s}) = {f1(p, s):.3f}  reported {reported}")

# with 0/0 defined as 0, a constant predictor gets F1 0 on the class it never predicts
counts = ConfusionCounts({"NON_COVID": ClassCounts(0, 0, 5), "COVID": ClassCounts(5, 5, 0)})
print(classification_report(counts))
