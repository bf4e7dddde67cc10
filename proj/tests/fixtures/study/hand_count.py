# Counts accuracies straight from data/events.jsonl and the labels in config.json.
import json
from fractions import Fraction

cfg = json.load(open("config.json"))
truth = {t["id"]: t["label"] for t in cfg["test_ids"]}
sessions = {s["session_id"]: s for s in json.load(open("data/sessions.json"))["sessions"]}
events = [json.loads(l) for l in open("data/events.jsonl") if l.strip()]

out = {}
for sid, s in sessions.items():
    row = {"participant_id": s["participant_id"]}
    for phase, key in (("SESSION_1", "s1"), ("SESSION_2", "s2")):
        seq = [e for e in events if e["session_id"] == sid and e["phase"] == phase]
        ok = [int(truth[e["image_id"]] == e["choice"]) for e in seq]
        row[f"correct_{key}"] = sum(ok)
        row[f"first_half_{key}"] = sum(ok[:25])
        row[f"second_half_{key}"] = sum(ok[25:])
        row[f"n_{key}"] = len(ok)
    out[sid] = row
print(json.dumps(out, indent=2))
