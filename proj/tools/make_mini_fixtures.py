#!/usr/bin/env python3
"""Regenerate the bundled mini fixtures under data/mini.

The corpus covers 2014-2016 with a handful of planted topics. "amazon"
co-occurs with the forest topic in 2014, retail in 2015 and media in 2016.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "mini"

TOPICS = {
    "forest": "river jungle forest tropical species basin rainforest canopy wildlife expedition".split(),
    "retail": "retail shopping store customers ecommerce delivery online marketplace warehouse shipping".split(),
    "media": "streaming video media television film studio content series music entertainment".split(),
    "compute": "software cloud platform algorithm database analytics encryption server network api".split(),
    "hardware": "sensor battery semiconductor robotics wireless chip laser drone circuit motor".split(),
    "health": "health patients hospital clinic doctors care diagnosis therapy nurses wellness".split(),
    "farm": "farming crops harvest soil irrigation farmers seeds livestock greenhouse tractor".split(),
    "money": "finance banking payments insurance lending loans credit savings wallet accounts".split(),
    "gain": "gain win profit bull optimistic worthy profitable rally surge upside".split(),
    "loss": "lose loss default bear pessimistic worthless unprofitable slump crash downside".split(),
}
FILLER = "the a of and to with for new its their".split()
MIGRATION = {2014: "forest", 2015: "retail", 2016: "media"}
PATENT_TOPICS = ["compute", "hardware"]


def sentence(rng, topic, length, extra=None):
    words = [rng.choice(TOPICS[topic]) for _ in range(length)]
    for _ in range(length // 4):
        words.insert(rng.randrange(len(words) + 1), rng.choice(FILLER))
    if extra:
        words.insert(rng.randrange(len(words) + 1), extra)
    return " ".join(words)


def corpus(rng):
    docs = []
    for year in (2014, 2015, 2016):
        for i in range(240):
            topic = rng.choice(list(TOPICS))
            source = "patent" if topic in PATENT_TOPICS and rng.random() < 0.6 else "news"
            text = sentence(rng, topic, rng.randint(8, 14))
            docs.append({"id": f"d{year}-{i:03d}", "year": year, "source": source, "text": text.capitalize() + "."})
        for i in range(30):
            text = sentence(rng, MIGRATION[year], rng.randint(8, 12), extra="Amazon")
            docs.append({"id": f"m{year}-{i:03d}", "year": year, "source": "news", "text": text + "."})
    docs.append({"id": "late", "year": 2019, "source": "news", "text": "outside the slice range"})
    return docs


def companies(rng):
    tech = TOPICS["compute"] + TOPICS["hardware"]
    apps = TOPICS["health"] + TOPICS["farm"] + TOPICS["money"] + TOPICS["retail"]
    keywords = ["software", "health", "fintech", "hardware", "consumer", "energy", "biotech", "media"]
    out = []
    for i in range(24):
        high_order = i % 2 == 0
        if high_order:
            fams = rng.sample(["compute", "hardware", "health", "farm", "money", "retail"], 3)
            words = [w for f in fams for w in rng.sample(TOPICS[f], 2)]
        else:
            fam = rng.choice(["compute", "hardware", "health", "money"])
            words = rng.sample(TOPICS[fam], 6)
        rng.shuffle(words)
        founded_year = rng.choice([2013, 2014, 2015])
        founded_month = rng.randint(1, 6)
        founded = f"{founded_year}-{founded_month:02d}-01"
        events = []
        y = founded_year
        m = founded_month + rng.randint(0, 5)
        events.append({"type": "seed", "date": f"{y}-{m:02d}-15", "investors": []})
        m2 = m + rng.randint(3, 9)
        y2 = y + (m2 - 1) // 12
        m2 = (m2 - 1) % 12 + 1
        investors = [
            {"id": f"vc{j}", "keywords": rng.sample(keywords, rng.randint(1, 3))} for j in range(rng.randint(1, 3))
        ]
        events.append({"type": "series_a", "date": f"{y2}-{m2:02d}-10", "investors": investors})
        end_kind = i % 6
        y3 = min(y2 + 1, 2016)
        if end_kind == 0:
            events.append({"type": "ipo", "date": f"{y3}-06-30"})
        elif end_kind in (1, 2, 3):
            price = None if end_kind == 3 else round(rng.uniform(5, 400), 1) * 1e6
            events.append({"type": "acquisition", "date": f"{y3}-09-01", "price_usd": price})
            if end_kind == 1:
                events.append({"type": "series_b", "date": f"{y3}-12-01"})
        elif end_kind == 4:
            events.append({"type": "closure", "date": f"{y3}-11-20"})
        industry = "software" if i % 3 else "health"
        rec = {
            "id": f"c{i:02d}",
            "founded": founded,
            "industry": industry,
            "description": "We build " + " and ".join(words[:3]) + " for " + " ".join(words[3:]) + ".",
            "events": events,
        }
        if i % 8 == 5:
            rec["snapshots"] = [
                {"date": f"{founded_year}-06-01", "text": " ".join(rng.sample(tech, 4))},
                {"date": f"{founded_year + 2}-06-01", "text": " ".join(rng.sample(apps, 4))},
            ]
        out.append(rec)
    out.append(
        {
            "id": "bad-order",
            "founded": "2014-01-01",
            "industry": "software",
            "description": "cloud payments",
            "events": [{"type": "series_a", "date": "2015-05-01"}, {"type": "seed", "date": "2014-05-01"}],
        }
    )
    return out


def main():
    rng = random.Random(20240101)
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "corpus.jsonl", "w") as f:
        for d in corpus(rng):
            f.write(json.dumps(d) + "\n")
    with open(OUT / "companies.jsonl", "w") as f:
        for c in companies(rng):
            f.write(json.dumps(c) + "\n")
    terms = ["machine learning", "cloud", "semiconductor", "encryption", "robotics", "sensor", "laser"]
    (OUT / "technical_terms.txt").write_text("\n".join(terms) + "\n")
    general = {w: 50 for t in ("health", "farm", "money", "retail", "media") for w in TOPICS[t]}
    patent = {w: 40 for t in PATENT_TOPICS for w in TOPICS[t]}
    for w in TOPICS["compute"] + TOPICS["hardware"]:
        general[w] = 2
    for w in TOPICS["health"]:
        patent[w] = 3
    with open(OUT / "general_freq.csv", "w") as f:
        f.write("term,count\n")
        for w in sorted(general):
            f.write(f"{w},{general[w]}\n")
    with open(OUT / "patent_freq.csv", "w") as f:
        f.write("term,count\n")
        for w in sorted(patent):
            f.write(f"{w},{patent[w]}\n")
    cpi = {2010: 218.1, 2011: 224.9, 2012: 229.6, 2013: 233.0, 2014: 236.7, 2015: 237.0, 2016: 240.0, 2017: 245.1}
    with open(OUT / "cpi.csv", "w") as f:
        f.write("year,index\n")
        for y, v in cpi.items():
            f.write(f"{y},{v}\n")


if __name__ == "__main__":
    main()
