#!/usr/bin/env python3
"""Generate the bundled 200-item sample: corpus, CoNLL-U parses, annotations,
dev set and a mock-backed run configuration.

Deterministic: rerunning overwrites fixtures/sample/ with identical bytes.
"""

import csv
import io
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "sample"
SEED = 20240611

# Each pattern: list of (form, lemma, upos, head, deprel); "{x}" forms are filled
# from the slot dict as (form, lemma).


def tok(form, lemma, upos, head, deprel):
    return (form, lemma, upos, head, deprel)


def subject(s):
    return [tok("The", "the", "DET", 2, "det"), tok(s[0], s[1], "NOUN", 3, "nsubj")]


def p_stop_at(s):
    # The car stops at the red light .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("at", "at", "ADP", 7, "case"),
        tok("the", "the", "DET", 7, "det"),
        tok(*s["adj"], "ADJ", 7, "amod"),
        tok(*s["noun"], "NOUN", 3, "obl"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_turn_because(s):
    # The car turns left at the intersection because the light is green .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok(*s["dir"], "ADV", 3, "advmod"),
        tok("at", "at", "ADP", 7, "case"),
        tok("the", "the", "DET", 7, "det"),
        tok(*s["noun"], "NOUN", 3, "obl"),
        tok("because", "because", "SCONJ", 12, "mark"),
        tok("the", "the", "DET", 10, "det"),
        tok(*s["noun2"], "NOUN", 12, "nsubj"),
        tok("is", "be", "AUX", 12, "cop"),
        tok(*s["adj"], "ADJ", 3, "advcl"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_let_cross(s):
    # The car slows down to let the pedestrian cross .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("down", "down", "ADP", 3, "compound:prt"),
        tok("to", "to", "PART", 6, "mark"),
        tok("let", "let", "VERB", 3, "advcl"),
        tok("the", "the", "DET", 8, "det"),
        tok(*s["noun"], "NOUN", 6, "obj"),
        tok("cross", "cross", "VERB", 6, "xcomp"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_follow_because(s):
    # The car slows because the truck ahead brakes .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("because", "because", "SCONJ", 8, "mark"),
        tok("the", "the", "DET", 6, "det"),
        tok(*s["noun"], "NOUN", 8, "nsubj"),
        tok("ahead", "ahead", "ADV", 6, "advmod"),
        tok(*s["verb2"], "VERB", 3, "advcl"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_merge_to(s):
    # The car merges into the left lane to reach the exit .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("into", "into", "ADP", 7, "case"),
        tok("the", "the", "DET", 7, "det"),
        tok(*s["adj"], "ADJ", 7, "amod"),
        tok("lane", "lane", "NOUN", 3, "obl"),
        tok("to", "to", "PART", 9, "mark"),
        tok("reach", "reach", "VERB", 3, "advcl"),
        tok("the", "the", "DET", 11, "det"),
        tok(*s["noun"], "NOUN", 9, "obj"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_around(s):
    # The car veers around the parked van .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("around", "around", "ADP", 7, "case"),
        tok("the", "the", "DET", 7, "det"),
        tok("parked", "park", "VERB", 7, "amod"),
        tok(*s["noun"], "NOUN", 3, "obl"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_passive(s):
    # The car is stopped by the officer .
    return [
        tok("The", "the", "DET", 2, "det"),
        tok(*s["subj"], "NOUN", 4, "nsubj:pass"),
        tok("is", "be", "AUX", 4, "aux:pass"),
        tok(*s["verb"], "VERB", 0, "root"),
        tok("by", "by", "ADP", 7, "case"),
        tok("the", "the", "DET", 7, "det"),
        tok(*s["noun"], "NOUN", 4, "obl"),
        tok(".", ".", "PUNCT", 4, "punct"),
    ]


def p_cannot(s):
    # The car can not proceed until the road reopens .
    return [
        tok("The", "the", "DET", 2, "det"),
        tok(*s["subj"], "NOUN", 5, "nsubj"),
        tok("can", "can", "AUX", 5, "aux"),
        tok("not", "not", "PART", 5, "advmod"),
        tok(*s["verb"], "VERB", 0, "root"),
        tok("until", "until", "SCONJ", 9, "mark"),
        tok("the", "the", "DET", 8, "det"),
        tok(*s["noun"], "NOUN", 9, "nsubj"),
        tok(*s["verb2"], "VERB", 5, "advcl"),
        tok(".", ".", "PUNCT", 5, "punct"),
    ]


def p_weather(s):
    # The car drives slowly because the road is wet .
    return subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok("slowly", "slowly", "ADV", 3, "advmod"),
        tok("because", "because", "SCONJ", 9, "mark"),
        tok("the", "the", "DET", 7, "det"),
        tok(*s["noun"], "NOUN", 9, "nsubj"),
        tok("is", "be", "AUX", 9, "cop"),
        tok(*s["adj"], "ADJ", 3, "advcl"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]


def p_two_sentences(s):
    # The car stops . The light is red .
    first = subject(s["subj"]) + [
        tok(*s["verb"], "VERB", 0, "root"),
        tok(".", ".", "PUNCT", 3, "punct"),
    ]
    second = [
        tok("The", "the", "DET", 2, "det"),
        tok(*s["noun"], "NOUN", 4, "nsubj"),
        tok("is", "be", "AUX", 4, "cop"),
        tok(*s["adj"], "ADJ", 0, "root"),
        tok(".", ".", "PUNCT", 4, "punct"),
    ]
    return [first, second]


SUBJ = [("car", "car"), ("car", "car"), ("car", "car"), ("vehicle", "vehicle")]

# context -> (count, [(weight, pattern, slot choices)])
SCENARIOS = {
    "Traffic Signal Compliance": (55, [
        (5, p_stop_at, {"verb": [("stops", "stop"), ("halts", "halt"), ("waits", "wait")],
                        "adj": [("red", "red"), ("amber", "amber")],
                        "noun": [("light", "light"), ("signal", "signal")]}),
        (2, p_two_sentences, {"verb": [("stops", "stop"), ("halts", "halt")],
                              "noun": [("light", "light"), ("signal", "signal")],
                              "adj": [("red", "red")]}),
    ]),
    "Pedestrian Interaction": (40, [
        (4, p_let_cross, {"verb": [("slows", "slow"), ("stops", "stop")],
                          "noun": [("pedestrian", "pedestrian"), ("pedestrians", "pedestrian"),
                                   ("child", "child")]}),
        (1, p_stop_at, {"verb": [("waits", "wait"), ("yields", "yield")],
                        "adj": [("busy", "busy"), ("marked", "marked")],
                        "noun": [("crosswalk", "crosswalk")]}),
    ]),
    "Vehicle Following Adjustment": (36, [
        (1, p_follow_because, {"verb": [("slows", "slow"), ("brakes", "brake")],
                               "noun": [("truck", "truck"), ("bus", "bus"), ("van", "van")],
                               "verb2": [("brakes", "brake"), ("slows", "slow"), ("stops", "stop")]}),
    ]),
    "Intersection Traversal": (30, [
        (1, p_turn_because, {"verb": [("turns", "turn"), ("proceeds", "proceed")],
                             "dir": [("left", "left"), ("right", "right"), ("straight", "straight")],
                             "noun": [("intersection", "intersection"), ("junction", "junction")],
                             "noun2": [("light", "light"), ("signal", "signal"), ("road", "road")],
                             "adj": [("green", "green"), ("clear", "clear")]}),
    ]),
    "Route Preparation Lane Change": (20, [
        (1, p_merge_to, {"verb": [("merges", "merge"), ("moves", "move"), ("changes", "change")],
                         "adj": [("left", "left"), ("right", "right"), ("outer", "outer")],
                         "noun": [("exit", "exit"), ("ramp", "ramp"), ("turn", "turn")]}),
    ]),
    "Static Obstacle Avoidance": (9, [
        (1, p_around, {"verb": [("veers", "veer"), ("steers", "steer"), ("swerves", "swerve")],
                       "noun": [("van", "van"), ("truck", "truck"), ("car", "car")]}),
    ]),
    "Closure Operations": (6, [
        (2, p_cannot, {"verb": [("proceed", "proceed"), ("continue", "continue")],
                       "noun": [("road", "road"), ("street", "street")],
                       "verb2": [("reopens", "reopen"), ("clears", "clear")]}),
        (1, p_passive, {"verb": [("stopped", "stop"), ("halted", "halt")],
                        "noun": [("officer", "officer"), ("barrier", "barrier")]}),
    ]),
    "Weather Adaptation": (4, [
        (1, p_weather, {"verb": [("drives", "drive"), ("moves", "move")],
                        "noun": [("road", "road"), ("surface", "surface")],
                        "adj": [("wet", "wet"), ("icy", "icy")]}),
    ]),
}


def render(tokens):
    text = " ".join(t[0] for t in tokens)
    return text.replace(" .", ".")


def conllu_block(eid, tokens):
    lines = [f"# sent_id = {eid}", f"# text = {render(tokens)}"]
    for i, (form, lemma, upos, head, deprel) in enumerate(tokens, start=1):
        lines.append("\t".join([str(i), form, lemma, upos, "_", "_", str(head), deprel, "_", "_"]))
    return "\n".join(lines) + "\n\n"


def build_items(rng):
    plan = []
    for label, (count, patterns) in SCENARIOS.items():
        weights = [w for w, _, _ in patterns]
        for _ in range(count):
            _, fn, slots = rng.choices(patterns, weights=weights)[0]
            filled = {k: rng.choice(v) for k, v in slots.items()}
            filled["subj"] = rng.choice(SUBJ)
            plan.append((label, fn(filled)))
    rng.shuffle(plan)
    items = []
    for i, (label, parsed) in enumerate(plan, start=1):
        eid = f"ex{i:04d}"
        sentences = parsed if isinstance(parsed[0], list) else [parsed]
        text = " ".join(render(s) for s in sentences)
        items.append({"id": eid, "text": text, "label": label, "sentences": sentences})
    return items


def reply(label, reason):
    return f"{reason} LABEL: {label}"


# (keywords, label, reasoning) in priority order; the tiebreak model uses these as-is.
BASE_RULES = [
    (["officer"], None, None),
    (["crosswalk"], "Pedestrian Interaction", "A crossing area is ahead, so the car gives way."),
    (["pedestrian"], "Pedestrian Interaction", "A person on foot is crossing."),
    (["child"], "Pedestrian Interaction", "A person on foot is crossing."),
    (["junction"], "Intersection Traversal", "The car moves through a junction."),
    (["intersection"], "Intersection Traversal", "The car moves through an intersection."),
    (["lane"], "Route Preparation Lane Change", "The car changes lane ahead of its route."),
    (["around"], "Static Obstacle Avoidance", "A stationary object blocks the path."),
    (["slowly"], "Weather Adaptation", "Road conditions are degraded."),
    (["ahead"], "Vehicle Following Adjustment", "The lead vehicle changes speed."),
    (["until"], "Closure Operations", "The road is closed for now."),
    (["barrier"], "Closure Operations", "The road is closed for now."),
    (["light"], "Traffic Signal Compliance", "The traffic light controls the car."),
    (["signal"], "Traffic Signal Compliance", "The traffic signal controls the car."),
]

# Small-model deviations: keyword -> label, inserted before the base rules.
SHARED_ERRORS = [(["marked"], "Regulatory Sign Obedience"), (["amber"], "Ambiguous Signal Resolution")]
M1_OVERRIDES = SHARED_ERRORS + [(["child"], "School Zone Protocols"), (["junction"], "Roundabout Circulation")]
M2_OVERRIDES = SHARED_ERRORS + [(["bus"], "Moving Hazard Evasion"), (["junction"], "Merging Integration")]


def toml_str(s):
    return json.dumps(s)


def mock_backend_toml(prefix, overrides):
    out = [f"[{prefix}.backend]", 'kind = "mock"', 'scope_marker = "Explanation:"',
           f"default_reply = {toml_str('I cannot determine the context.')}", ""]
    rules = [(k, lab, "Reasoning from a narrower reading.") for k, lab in overrides]
    rules += [r for r in BASE_RULES if r[1] is not None]
    for keywords, label, reason in rules:
        out.append(f"[[{prefix}.backend.rules]]")
        out.append(f"keywords = [{', '.join(toml_str(k) for k in keywords)}]")
        out.append(f"reply = {toml_str(reply(label, reason))}")
        out.append("")
    return "\n".join(out)


def run_toml():
    head = """corpus_path = "corpus.jsonl"
conllu_path = "parses.conllu"
annotations_path = "annotations.csv"
dev_path = "dev.jsonl"
output_dir = "out"
parallelism = 4
label_source = "classified"

[keyness]
alpha0 = 1000.0
top_k = 10

[syntax]
min_share = 0.10

[sampling]
fraction = 0.10
min_n = 2
seed = 7

[refine]
tau_accept = 0.85
dev_mode = "single"

[evaluation]
macro_average = "supported"

"""
    parts = [head]
    for role, model, overrides in [("m1", "mock-small-a", M1_OVERRIDES),
                                   ("m2", "mock-small-b", M2_OVERRIDES),
                                   ("m3", "mock-large", [])]:
        parts.append(f"[ensemble.{role}]\nmodel_id = {toml_str(model)}\ntemperature = 0.0\nmax_tokens = 512\n\n")
        parts.append(mock_backend_toml(f"ensemble.{role}", overrides))
        parts.append("\n")
    return "".join(parts)


def annotations(rng, items):
    labels = sorted(SCENARIOS)
    chosen = sorted(rng.sample(items, 60), key=lambda it: it["id"])
    rows = []
    for it in chosen:
        gold = it["label"]
        h1 = gold if rng.random() > 0.08 else rng.choice([l for l in labels if l != gold])
        h2 = gold if rng.random() > 0.12 else rng.choice([l for l in labels if l != gold])
        rows += [(it["id"], "H1", h1), (it["id"], "H2", h2), (it["id"], "CONSENSUS", gold)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["explanation_id", "annotator_id", "label"])
    w.writerows(rows)
    return buf.getvalue()


def main():
    rng = random.Random(SEED)
    items = build_items(rng)
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "corpus.jsonl", "w", newline="\n") as f:
        for it in items:
            f.write(json.dumps({"id": it["id"], "text": it["text"], "label": it["label"]}) + "\n")
    with open(OUT / "parses.conllu", "w", newline="\n") as f:
        for it in items:
            for s in it["sentences"]:
                f.write(conllu_block(it["id"], s))
    with open(OUT / "annotations.csv", "w", newline="\n") as f:
        f.write(annotations(rng, items))
    dev = rng.sample([it for it in items if "officer" not in it["text"]], 20)
    with open(OUT / "dev.jsonl", "w", newline="\n") as f:
        for it in sorted(dev, key=lambda it: it["id"]):
            f.write(json.dumps({"id": "dev-" + it["id"], "text": it["text"], "label": it["label"]}) + "\n")
    with open(OUT / "run.toml", "w", newline="\n") as f:
        f.write(run_toml())


if __name__ == "__main__":
    main()
