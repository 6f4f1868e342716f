"""promptmap: prompt-conditioned document scoring, relevance-preserving
circular document maps, and corpus-level attention topics."""

from .attention import (
    AttentionLayer,
    ContrastiveBatch,
    PromptAttention,
    PromptResult,
    PromptWeighting,
    TrainConfig,
    attention,
    attention_weights,
    compose_prompts,
    contrastive_loss,
    dynamic_embedding,
    evaluate_prompt,
    load_layer,
    loss_gradient,
    rar,
    relevance,
    save_layer,
    train,
)
from .clustering import Clustering, KMeans, ari, color_cells, elbow_k, kmeans, silhouette
from .corpus import (
    CorpusRecord,
    QATriplet,
    SynthConfig,
    SynthCorpus,
    answer_token_indices,
    embed_records,
    load_corpus_csv,
    load_digits_csv,
    load_qa_triplets,
    load_training_pairs,
    synth_corpus,
    triplets_to_training,
)
from .embeddings import (
    DocumentEmbeddings,
    EmbeddingFormatError,
    EmbeddingStore,
    PromptEmbedding,
    TokenEmbedding,
    ToyEmbedder,
    import_jsonl,
    load_store,
    save_store,
    tokenize,
    toy_embed_document,
    toy_embed_prompt,
)
from .gridmap import (
    GridCell,
    GridMap,
    MapConfig,
    MapItem,
    RelevanceMap,
    assign_epoch,
    build_grid,
    export_layout,
    global_cost,
    matching_cost,
    normalize_relevance,
    rpc,
    save_layout,
    update_relevance,
    update_weights,
)
from .gridmap import fit as fit_map
from .topics import (
    AttentionMatrix,
    AttentionTopicModel,
    TopicDecomposition,
    build_attention_matrix,
    export_topics,
    nmf,
    save_topics,
    select_topic_count,
    top_tokens,
)

__version__ = "0.1.0"
