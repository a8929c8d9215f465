"""Grounded word embeddings for product search.

Query vectors are built from the products shoppers click, inside a product
space learned from browsing sessions.
"""

from .datamodel import Catalog, ClickEvent, ClickLog, EmbeddingSpace, Product, Session, SessionSet
from .evalkit import Analogy, AnalogyGenConfig, EvalReport, SimilarityTriplet, generate_analogies, gini, hit_rate
from .prodvec import TrainConfig, nearest_neighbors, train, train_text
from .queryembed import ClickHistogram, RankConfig, aggregate_clicks, build_lexicon, embed_query
from .searchindex import InvertedIndex, build_index, search, tokenize
from .synth import PopularityDistribution, ShopSpec, SynthConfig, estimate_popularity, generate_synthetic_events, generate_synthetic_shop

__version__ = "0.1.0"
