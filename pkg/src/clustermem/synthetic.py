"""Seeded topic-labelled memory streams with known ground truth."""
from __future__ import annotations

import datetime as dt
import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataset import MemoryItem, QaDataset, QaRecord
from .embedding import HashingEmbedder

WORD_POOLS = {
    "travel": """passport luggage airport hotel itinerary backpack boarding voyage souvenir
        hostel visa cruise ferry layover terminal jetlag suitcase tourist excursion resort
        sightseeing checkin departure arrival compass roadtrip railpass guidebook postcard
        campsite embassy customs lounge shuttle duffel atlas inn highway motel pilgrimage""",
    "cooking": """recipe skillet oven garlic simmer saute marinade basil whisk dough pastry
        broth ladle spatula oregano paprika braise roast knead yeast batter casserole
        cumin thyme saucepan colander grill skewer vinaigrette risotto noodle dumpling
        chutney glaze zest caramel frosting stew omelette brisket""",
    "sports": """basketball referee stadium dribble touchdown goalkeeper sprint marathon
        tournament playoff coach jersey scoreboard rebound tackle hurdle javelin wrestling
        volleyball umpire inning dugout freestyle relay podium trophy halftime offside
        penalty quarterback pitcher shortstop slalom dunk racquet shuttlecock league
        championship athlete""",
    "music": """guitar melody chord rhythm violin orchestra concert drummer saxophone
        tempo harmony lyric ballad chorus symphony piano cello bassline soprano tenor
        conductor metronome encore setlist amplifier acoustic vinyl playlist album riff
        crescendo octave opera quartet jazz banjo ukulele trombone clarinet headliner""",
    "astronomy": """telescope galaxy nebula comet asteroid orbit planet meteor eclipse
        constellation supernova quasar pulsar redshift exoplanet cosmos stargazing lunar
        solar equinox observatory spectrum wormhole blackhole satellite aurora zodiac
        perihelion aphelion parallax magnitude astrolabe crater jupiter saturn neptune
        venus mercury uranus""",
    "gardening": """compost seedling trowel mulch pruning greenhouse tulip fertilizer
        shovel hedge orchard perennial annual trellis irrigation sprinkler weeding topsoil
        rake hoe bulb bonsai succulent fern hydrangea rosebush seedbed germinate cuttings
        potting harvest sapling vineyard pollinator blossom daisy lavender marigold
        peony""",
    "finance": """budget savings mortgage dividend portfolio stock bond interest loan
        invoice taxes pension equity broker ledger inflation hedgefund annuity credit
        debit payroll audit revenue expense liquidity bankruptcy collateral refinance
        escrow appraisal premium deductible treasury forex valuation shareholder
        earnings principal""",
    "medicine": """doctor clinic vaccine prescription symptom diagnosis surgery nurse
        antibiotic fever insulin therapy xray stethoscope pharmacy dosage allergy
        bandage fracture cardiology pediatric immunity inflammation migraine anesthesia
        biopsy ultrasound physiotherapy rehab ointment pulse checkup outpatient
        infection remedy syringe tablet paramedic""",
    "literature": """novel poetry chapter author manuscript sonnet protagonist narrator
        fiction anthology paperback hardcover memoir prologue epilogue stanza villain
        storyteller bookshelf library publisher editor plot trilogy fantasy mystery
        detective wizard dragon saga fable parable metaphor allegory biography
        bestseller bookstore fanfiction""",
    "computing": """compiler debugger keyboard processor algorithm database server
        laptop software firmware bandwidth router kernel python javascript repository
        commit branch merge variable function recursion cache encryption firewall
        malware backup cloud container docker terminalapp bytecode pixel monitor
        touchscreen motherboard gigabyte""",
}


def pools() -> dict[str, list[str]]:
    return {name: text.split() for name, text in WORD_POOLS.items()}


@dataclass
class SyntheticSpec:
    topic_count: int = 3
    notes_per_topic: int = 10
    words_per_note: int = 6
    vocab_per_topic: int = 12
    distractor_rate: float = 0.0
    drift_at: int | None = None
    questions_per_topic: int = 2
    seed: int = 0
    vocabularies: list[list[str]] | None = None


@dataclass
class SyntheticData:
    dataset: QaDataset
    labels: list[int]
    topic_names: list[str]
    separability: float = field(default=float("nan"))

    @property
    def stream(self) -> list[MemoryItem]:
        return self.dataset.streams["synthetic"]


def _vocabularies(spec: SyntheticSpec) -> tuple[list[str], list[list[str]]]:
    total = spec.topic_count + (1 if spec.drift_at is not None else 0)
    if spec.vocabularies is not None:
        vocabs = [list(v) for v in spec.vocabularies]
        if len(vocabs) != total:
            raise ValueError(f"need {total} vocabularies, got {len(vocabs)}")
        names = [f"topic{i}" for i in range(total)]
    else:
        available = pools()
        if total > len(available):
            raise ValueError(f"at most {len(available)} built-in topics")
        names = list(available)[:total]
        vocabs = [available[n][: spec.vocab_per_topic] for n in names]
    for (i, a), (j, b) in itertools.combinations(enumerate(vocabs), 2):
        shared = set(a) & set(b)
        if shared:
            raise ValueError(f"vocabularies {i} and {j} overlap: {sorted(shared)[:5]}")
    for v in vocabs:
        if len(v) < spec.words_per_note:
            raise ValueError("each vocabulary needs at least words_per_note words")
    return names, vocabs


def generate(spec: SyntheticSpec | None = None, check_separability: bool = True) -> SyntheticData:
    """Build a session-style dataset: one shared stream plus QA records.

    Topics are interleaved round-robin. With ``drift_at`` set, one extra topic
    joins the rotation once the stream reaches that position.
    """
    spec = spec or SyntheticSpec()
    if spec.topic_count < 1:
        raise ValueError("topic_count must be >= 1")
    names, vocabs = _vocabularies(spec)
    rng = np.random.default_rng(spec.seed)

    per_topic: list[list[str]] = []
    for t, vocab in enumerate(vocabs):
        texts = []
        for _ in range(spec.notes_per_topic):
            words = list(rng.choice(vocab, size=spec.words_per_note, replace=False))
            if spec.distractor_rate > 0 and len(vocabs) > 1 and rng.random() < spec.distractor_rate:
                other = int(rng.choice([i for i in range(len(vocabs)) if i != t]))
                words[int(rng.integers(len(words)))] = str(rng.choice(vocabs[other]))
            texts.append(" ".join(words))
        per_topic.append(texts)

    queues = [list(q) for q in per_topic]
    order: list[int] = []
    base = list(range(spec.topic_count))
    drift = spec.topic_count if spec.drift_at is not None else None
    while any(queues):
        active = base + ([drift] if drift is not None and len(order) >= spec.drift_at else [])
        progressed = False
        for t in active:
            if queues[t]:
                order.append(t)
                queues[t].pop(0)
                progressed = True
        if not progressed:
            # only the drift topic is left but it has not started yet
            order.append(drift)
            queues[drift].pop(0)

    cursors = [0] * len(per_topic)
    start = dt.datetime(2024, 1, 1)
    stream, labels = [], []
    for pos, t in enumerate(order):
        text = per_topic[t][cursors[t]]
        cursors[t] += 1
        stamp = (start + dt.timedelta(minutes=pos)).isoformat()
        stream.append(MemoryItem(text, stamp))
        labels.append(t)

    records = []
    for t, texts in enumerate(per_topic):
        for q in range(min(spec.questions_per_topic, len(texts))):
            words = texts[q].split()
            records.append(QaRecord(
                question=f"Which memory mentions {words[0]} and {words[1]}?",
                gold_answer=" ".join(words[2:4]),
                gold_evidence=[texts[q]],
                stream_id="synthetic",
            ))

    data = SyntheticData(QaDataset(records, {"synthetic": stream}), labels, names)
    if check_separability and spec.topic_count > 1:
        data.separability = separability(stream, labels)
        if spec == SyntheticSpec() and data.separability < 0.2:
            raise RuntimeError(f"default synthetic topics not separable enough ({data.separability:.3f})")
    return data


def separability(stream, labels, embedder=None) -> float:
    """Mean intra-topic cosine minus mean inter-topic cosine."""
    embedder = embedder or HashingEmbedder()
    vectors = np.array([embedder.embed_text(item.content) for item in stream])
    sims = vectors @ vectors.T
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    intra = sims[same & off_diag]
    inter = sims[~same]
    if intra.size == 0 or inter.size == 0:
        return float("nan")
    return float(intra.mean() - inter.mean())


def purity(assignments, labels) -> float:
    """Share of items that sit in their cluster's majority label."""
    groups: dict = {}
    for cluster, label in zip(assignments, labels):
        groups.setdefault(cluster, []).append(label)
    majority = sum(max(np.bincount(g)) for g in groups.values())
    return majority / len(labels) if labels else 1.0
