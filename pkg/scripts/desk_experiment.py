"""Desk-scale two-stage pipeline vs joint baseline, with zero-shot, retrieval,
Grad-CAM localization and alignment-probe summaries.

    python3 scripts/desk_experiment.py --seeds 1 2 3 --out desk_results.json
"""

import argparse
import json
import time

import numpy as np

from radvlp.evaluation import alignment_probe, eval_retrieval, eval_zero_shot, prompt_bank
from radvlp.pipeline import add_joint_baseline, desk_corpus, gradcam_localization, run_two_stage


def one_seed(seed, n_studies, joint, extras):
    t0 = time.perf_counter()
    data = desk_corpus(seed, n_studies)
    run = run_two_stage(data, seed)
    res = {"seed": seed, "two_stage_val_clip": run.two_stage_val_clip}
    if joint:
        add_joint_baseline(run)
        res["joint_val_clip"] = run.joint_val_clip
    if extras:
        res["random_auc_p3"] = eval_zero_shot(run.random_model, data).macro["auc"]
        res["prompt_auc"] = [eval_zero_shot(run.model, data, prompt=p).macro["auc"] for p in prompt_bank()]
        res["recall_at"] = eval_retrieval(run.model, data).recall_at
        res["gradcam_iou"], res["gradcam_perm_iou"] = gradcam_localization(run.model, data)
        for f in ("related", "unrelated"):
            res[f"probe_{f}"] = alignment_probe(run.model, data, sentence_filter=f).loss
    res["seconds"] = {**run.seconds, "total": time.perf_counter() - t0}
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--n-studies", type=int, default=500)
    ap.add_argument("--no-joint", action="store_true")
    ap.add_argument("--no-extras", action="store_true", help="skip evaluation beyond val clip loss")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    results = []
    for seed in args.seeds:
        r = one_seed(seed, args.n_studies, not args.no_joint, not args.no_extras)
        print(json.dumps(r), flush=True)
        results.append(r)
    if not args.no_joint:
        wins = sum(r["two_stage_val_clip"] <= r["joint_val_clip"] for r in results)
        print(f"two-stage <= joint in {wins}/{len(results)} seeds")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2, default=lambda x: float(np.asarray(x)))


if __name__ == "__main__":
    main()
