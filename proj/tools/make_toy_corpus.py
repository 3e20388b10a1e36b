#!/usr/bin/env python3
"""Regenerates data/toy_corpus.jsonl and data/toy_actuality.txt.

The corpus is a small synthetic stand-in for fact-checked Hindi news: 30 fake
and 30 real items, each with a human-style explanation and three machine
candidates of varying closeness to it. Output is deterministic.
"""

import json
import random
from pathlib import Path

MODELS = ["gemini-1.5-flash", "gpt-4o-mini", "mistral-7b-v0.1"]

SUBJECTS = [
    "प्रधानमंत्री", "मुख्यमंत्री", "दिल्ली सरकार", "भारतीय रेलवे", "रिज़र्व बैंक",
    "इसरो", "स्वास्थ्य मंत्रालय", "चुनाव आयोग", "सुप्रीम कोर्ट", "शिक्षा मंत्रालय",
    "बिहार पुलिस", "नगर निगम", "विश्व स्वास्थ्य संगठन", "वित्त मंत्रालय", "राज्य सरकार",
]

FAKE_CLAIMS = [
    "ने दो हज़ार रुपये के सभी नोट तुरंत बंद करने की घोषणा की",
    "ने हर नागरिक को मुफ्त मोबाइल देने का वादा किया",
    "ने पेट्रोल की कीमत आधी करने का आदेश दिया",
    "ने अगले महीने से सभी स्कूल बंद करने का फैसला किया",
    "ने गर्म पानी पीने से वायरस खत्म होने की पुष्टि की",
    "ने सभी बैंक खातों में पंद्रह हज़ार रुपये भेजने की घोषणा की",
]

REAL_CLAIMS = [
    "ने नई रेल लाइन का उद्घाटन किया",
    "ने किसानों के लिए नई बीमा योजना शुरू की",
    "ने ब्याज दरों में कोई बदलाव नहीं किया",
    "ने टीकाकरण अभियान का दूसरा चरण शुरू किया",
    "ने परीक्षा के नतीजे समय पर जारी किए",
    "ने बाढ़ प्रभावित इलाकों के लिए राहत पैकेज मंज़ूर किया",
]

SOURCES = ["WhatsApp संदेश", "फेसबुक पोस्ट", "वायरल वीडियो", "ट्विटर पोस्ट", "अख़बार की कतरन"]

OFF_TOPIC = [
    "यह खबर मौसम और खेल से जुड़ी है और इसमें कई अलग बातें कही गई हैं ।",
    "इस लेख में बाज़ार के उतार चढ़ाव और फिल्मों की चर्चा की गई है ।",
    "सोशल मीडिया पर लोग अक्सर बिना जाँच के बातें साझा करते हैं ।",
    "The article talks about cricket scores and Bollywood news .",
]


def fake_record(i, subject, claim, source, rng):
    news = f"सोशल मीडिया पर वायरल {source} में दावा किया गया कि {subject} {claim} ।"
    truth = (f"यह दावा झूठा है । {subject} ने ऐसी कोई घोषणा नहीं की है । "
             f"आधिकारिक बयान में इस {source} का खंडन किया गया है ।")
    close = f"यह दावा गलत है । {subject} ने ऐसी कोई घोषणा नहीं की । यह {source} भ्रामक है ।"
    partial = f"{subject} के बारे में यह {source} सही नहीं लगता और इसकी जाँच होनी चाहिए ।"
    return news, truth, close, partial


def real_record(i, subject, claim, source, rng):
    news = f"मीडिया रिपोर्ट के अनुसार {subject} {claim} ।"
    truth = f"यह खबर सच है । {subject} {claim} । इसकी पुष्टि आधिकारिक स्रोतों से हुई है ।"
    close = f"यह खबर सही है । {subject} {claim} । सरकारी बयान में इसकी पुष्टि हुई ।"
    partial = f"{subject} से जुड़ी यह रिपोर्ट शायद सही है लेकिन {source} में पूरी जानकारी नहीं है ।"
    return news, truth, close, partial


def build(rng):
    records = []
    for label, claims, make in (("fake", FAKE_CLAIMS, fake_record), ("real", REAL_CLAIMS, real_record)):
        for i in range(30):
            subject = SUBJECTS[i % len(SUBJECTS)]
            claim = claims[(i * 7 + i // len(SUBJECTS)) % len(claims)]
            source = SOURCES[i % len(SOURCES)]
            news, truth, close, partial = make(i, subject, claim, source, rng)
            off = OFF_TOPIC[i % len(OFF_TOPIC)]
            texts = [close, partial, off]
            # rotate which model produced which quality level
            shift = (i * 2 + (label == "real")) % 3
            texts = texts[shift:] + texts[:shift]
            if label == "fake" and i == 0:
                # one candidate copies the ground truth verbatim
                texts[1] = truth
            rid = f"{label}-{i:03d}"
            record = {
                "id": rid,
                "label": label,
                "news_text": news,
                "ground_truth_explanation": truth,
                "candidates": [{"model_id": m, "text": t} for m, t in zip(MODELS, texts)],
                "actuality_preferred": round(rng.uniform(0.7, 1.0), 2),
                "actuality_candidates": [round(rng.uniform(0.0, 1.0), 2) for _ in MODELS],
            }
            records.append(record)
    return records


def main():
    root = Path(__file__).resolve().parent.parent / "data"
    root.mkdir(exist_ok=True)
    records = build(random.Random(20250101))
    with open(root / "toy_corpus.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")
    with open(root / "toy_actuality.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write("# <record_id> <pref|cand0|cand1|cand2> <score>\n")
        for r in records:
            f.write(f"{r['id']} pref {r['actuality_preferred']}\n")
            for k, s in enumerate(r["actuality_candidates"]):
                f.write(f"{r['id']} cand{k} {s}\n")


if __name__ == "__main__":
    main()
