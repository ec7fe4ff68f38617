"""Self-organizing clustered memory for small-language-model agents."""
from .config import ConfigError, EngineConfig
from .dataset import MemoryItem, QaDataset, QaRecord, load_dataset
from .embedding import HashingEmbedder, RemoteEmbedder, cosine_similarity
from .engine import IngestResult, MemoryEngine, cluster_stats
from .gateway import ChatCompletionsClient, DecisionLog, ScriptedStub, SlmGateway
from .harness import EvalReport, evaluate
from .kmeans import kmeans
from .metrics import bleu1, meteor, metric_bundle, ndcg_at_k, recall_at_k, token_f1
from .retrieval import RetrievalResult, search_space_reduction
from .routing import RoutingOutcome
from .store import ClusterProfile, MemoryNote, MemoryStore
from .stubs import HeuristicStub
from .synthetic import SyntheticSpec, generate

__version__ = "0.1.0"
