"""
What skipping review saves
==========================

Segments predicted KEEP form the "leave as is" (LAI) set. Publishing them
unreviewed saves the most but lets the false negatives through. Reviewing
them at a discounted rate saves less and lets nothing through.
"""

from mtpe.metrics import (
    ConfusionMatrix,
    SavingsParams,
    compare_models,
    evaluate,
    render_comparison,
    render_report,
    scenario2,
)

en_it = ConfusionMatrix(tp=503, fp=81, tn=191, fn=67)
en_de = ConfusionMatrix(tp=256, fp=46, tn=442, fn=90)

print(render_report(evaluate(en_it)))
print(render_report(evaluate(en_de, SavingsParams(0.10))))

# savings fall linearly with the pay rate for LAI review
for r in (0.0, 0.1, 0.25, 0.5, 1.0):
    print(f"pay {r:>4.0%}: EN-IT {scenario2(en_it, r):6.2%}  EN-DE {scenario2(en_de, r):6.2%}")

# three models on the same 842-segment test set
rows = compare_models([
    ("curie", ConfusionMatrix(tp=503, fp=81, tn=191, fn=67)),
    ("davinci", ConfusionMatrix(tp=505, fp=79, tn=194, fn=64)),
    ("gpt-3.5-turbo", ConfusionMatrix(tp=510, fp=74, tn=196, fn=62)),
])
print(render_comparison(rows))
