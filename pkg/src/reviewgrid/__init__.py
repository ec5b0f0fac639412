"""Grid-organized latent class modeling of product reviews.

The package covers the full pipeline: corpus preprocessing, SOM-seeded EM
training of a two-sided latent class model whose classes live on 2-D
grids, interpretable per-class word reports, Bayesian classification of
unseen users, and linear rating prediction over the learned assignments.
"""

from .corpus import (
    Corpus,
    CorpusError,
    RawReview,
    SplitSpec,
    Vocabulary,
    build_corpus,
    ingest_reviews,
    load_corpus,
    normalize_text,
    save_corpus,
    select_vocabulary,
    split_all_but_one,
    split_rating,
    term_frequency_vectors,
)
from .grid import ChannelNoise, GridLayout, channel_noise, make_grid, sample_corrupted
from .interpret import (
    ClassWordDistribution,
    GridReport,
    OosPosterior,
    class_word_distribution,
    conditional_class_distribution,
    oos_posterior,
    render_grid_json,
    render_grid_text,
    top_words,
)
from .model import (
    EmTrace,
    ModelParams,
    ProjectedPriors,
    TokenTable,
    em_iteration,
    fit_em,
    log_likelihood,
    nll,
    posterior_y,
    posterior_z,
    project_priors,
    sample_corpus,
    word_class_mix,
    word_probability,
)
from .modelfile import ModelBundle, RunConfig, load_model, save_model
from .rating import (
    EvalResult,
    RatingModel,
    baseline_global_mean,
    build_features,
    evaluate_mse,
    fit_ridge,
    predict,
)
from .som import (
    InitParams,
    SomConfig,
    SomMap,
    assign_bmu,
    init_word_distribution,
    initialize_model,
    soften_assignments,
    train_som,
)

__version__ = "0.1.0"
