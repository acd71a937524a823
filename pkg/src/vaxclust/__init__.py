"""vaxclust: district vaccination-coverage clustering, prediction, attribution.

Pipeline stages, each usable on its own:

1. ``dataset``    — ingest and join the per-year vaccination / GDSC tables
2. ``hcluster``   — Ward agglomeration, dendrogram, k-cut, coverage labels
3. ``gbdt``       — boosted oblivious-tree classifier with ordered
                    target-statistic encoding of categoricals
4. ``shapley``    — exact TreeSHAP plus a brute-force oracle
5. ``evaluation`` — stratified cross-validation and macro metrics
6. ``stats``      — Mann-Whitney tests, box summaries, rurality cross-tabs
7. ``synth``      — deterministic synthetic districts from embedded means
8. ``pipeline``   — orchestration and report emission (CLI in ``cli``)
"""

__version__ = "0.1.0"
