# tests/test_recsys.py
import numpy as np
import pytest

from conftest import block_interactions
from src.crud.crud_checkpoint import load_checkpoint, save_checkpoint
from src.exceptions import DatasetError, ShapeError
from src.schemas.dataset_schemas import TEST, TRAIN, InteractionDataset, RawInteraction
from src.schemas.model_schemas import EmbeddingModel, TrainConfig
from src.services.data_loader import split_dataset
from src.services.lightgcn_service import bpr_loss_and_grad, build_adjacency, propagate, train_lightgcn
from src.services.mf_service import bce_loss_and_grad, train_mf
from src.services.recsys_service import (
    eval_popularity, eval_ranking, recommend_topk, replace_user_embedding, user_embedding,
)
from src.services.training import PositiveIndex


def _central_difference(f, x, step=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f(x)
        x[idx] = orig - step
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def _ranking_fixture(test_item: int) -> InteractionDataset:
    """One user, 12 items; item 11 is the train item, item i (< 11) scores 10 - i."""
    items = np.array(sorted([test_item, 11]))
    split = np.where(items == 11, TRAIN, TEST).astype(np.int8)
    return InteractionDataset(
        n_users=1, n_items=12, users=np.zeros(2, dtype=np.int64), items=items, ratings=np.ones(2),
        split=split, user_ids=["u"], item_ids=[str(i) for i in range(12)], seed=0, ratios=(0.8, 0.1, 0.1),
    )


def _scoring_model(item_scores, user_emb=None) -> EmbeddingModel:
    item_emb = np.asarray(item_scores, dtype=np.float64).reshape(-1, 1)
    return EmbeddingModel(kind="MF", user_emb=np.ones((1, 1)) if user_emb is None else user_emb, item_emb=item_emb)


RANKING_SCORES = [10 - i for i in range(11)] + [100.0]


# --- MF ---

def test_mf_zero_epochs_keeps_gaussian_init(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=0, seed=3))
    rng = np.random.default_rng(3)
    assert np.array_equal(model.user_emb, rng.normal(0.0, 0.01, size=(dataset.n_users, 16)))
    assert abs(model.item_emb.std() - 0.01) < 0.002


def test_mf_learns_block_structure():
    dataset = split_dataset(block_interactions(), ratios=(0.8, 0.1, 0.1), seed=0)
    model = train_mf(dataset, TrainConfig(epochs=40, learning_rate=0.01, batch_size=64, seed=1))
    scores = model.user_emb @ model.item_emb.T
    user_block = np.array([int(u) < 20 for u in dataset.user_ids])
    item_block = np.array([int(i) < 10 for i in dataset.item_ids])
    matched = user_block[:, None] == item_block[None, :]
    assert scores[matched].mean() > scores[~matched].mean()


def test_mf_is_deterministic(synthetic_dataset):
    dataset, _ = synthetic_dataset
    cfg = TrainConfig(epochs=2, seed=9)
    first, second = train_mf(dataset, cfg), train_mf(dataset, cfg)
    assert np.array_equal(first.user_emb, second.user_emb)
    assert np.array_equal(first.item_emb, second.item_emb)


def test_bce_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    users, items = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    labels = np.array([1, 0, 1, 0, 0, 1], dtype=float)
    _, grad_u, grad_i = bce_loss_and_grad(users, items, labels)
    numeric_u = _central_difference(lambda u: bce_loss_and_grad(u, items, labels)[0], users.copy())
    numeric_i = _central_difference(lambda i: bce_loss_and_grad(users, i, labels)[0], items.copy())
    assert np.allclose(grad_u, numeric_u, rtol=1e-5, atol=1e-8)
    assert np.allclose(grad_i, numeric_i, rtol=1e-5, atol=1e-8)


def test_negative_samples_avoid_train_items(synthetic_dataset):
    dataset, _ = synthetic_dataset
    users, items = dataset.pairs(TRAIN)
    index = PositiveIndex(users, items, dataset.n_users, dataset.n_items)
    sampled = index.sample_negatives(np.random.default_rng(0), np.repeat(users, 4))
    assert not index.contains(np.repeat(users, 4), sampled).any()


# --- LightGCN ---

def test_two_node_graph_normalizes_to_ones():
    adjacency = build_adjacency(1, 1, np.array([0]), np.array([0])).toarray()
    assert np.allclose(adjacency, [[0.0, 1.0], [1.0, 0.0]])


def test_isolated_user_cannot_be_normalized():
    with pytest.raises(DatasetError):
        build_adjacency(2, 2, np.array([0, 0]), np.array([0, 1]))


def test_isolated_item_rejected_unless_allowed():
    with pytest.raises(DatasetError):
        build_adjacency(1, 2, np.array([0]), np.array([0]))
    adjacency = build_adjacency(1, 2, np.array([0]), np.array([0]), allow_isolated_items=True)
    assert adjacency[2].nnz == 0


def test_propagation_is_linear():
    adjacency = build_adjacency(3, 4, np.array([0, 0, 1, 2, 2]), np.array([0, 1, 2, 3, 1]))
    base = np.random.default_rng(0).normal(size=(7, 2))
    assert np.allclose(propagate(adjacency, 2.5 * base, 3), 2.5 * propagate(adjacency, base, 3))


def _toy_graph_dataset():
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (1, 3), (2, 0), (2, 2), (2, 3)]
    records = [RawInteraction(user_ext=str(u), item_ext=str(i), rating=1.0, timestamp=0) for u, i in pairs]
    return split_dataset(records, ratios=(1.0, 0.0, 0.0), seed=0)


def test_zero_layers_equals_base_parameters():
    model = train_lightgcn(_toy_graph_dataset(), TrainConfig(epochs=0, n_layers=0, seed=2))
    assert np.array_equal(user_embedding(model), model.base_user)


def test_two_layer_embedding_matches_dense_propagation():
    dataset = _toy_graph_dataset()
    model = train_lightgcn(dataset, TrainConfig(epochs=0, n_layers=2, seed=2))
    a = np.zeros((7, 7))
    users, items = dataset.pairs(TRAIN)
    a[users, 3 + items] = 1.0
    a[3 + items, users] = 1.0
    d = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    a_hat = d @ a @ d
    e0 = np.vstack([model.base_user, model.base_item])
    expected = (e0 + a_hat @ e0 + a_hat @ a_hat @ e0) / 3.0
    assert np.allclose(user_embedding(model), expected[:3], atol=1e-12)
    assert np.allclose(model.item_emb, expected[3:], atol=1e-12)


def test_bpr_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    users, pos, neg = rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    _, grad_u, grad_p, grad_n = bpr_loss_and_grad(users, pos, neg)
    for analytic, position in ((grad_u, 0), (grad_p, 1), (grad_n, 2)):
        args = [users.copy(), pos.copy(), neg.copy()]

        def loss(x, position=position, args=args):
            call = list(args)
            call[position] = x
            return bpr_loss_and_grad(*call)[0]

        numeric = _central_difference(loss, args[position].copy())
        assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_bpr_gradient_pushes_positive_above_negative_on_ties():
    user = np.array([[0.5, -1.0, 2.0]])
    item = np.array([[0.3, 0.3, 0.3]])
    _, _, grad_pos, grad_neg = bpr_loss_and_grad(user, item, item.copy())
    # a descent step moves the positive towards the user and the negative away
    assert float(grad_pos @ user.T) < 0 < float(grad_neg @ user.T)


def test_lightgcn_training_is_deterministic(synthetic_dataset):
    dataset, _ = synthetic_dataset
    cfg = TrainConfig(epochs=2, n_layers=2, seed=4)
    first, second = train_lightgcn(dataset, cfg), train_lightgcn(dataset, cfg)
    assert np.array_equal(first.user_emb, second.user_emb)
    assert first.kind == "LightGCN" and first.adjacency is not None


# --- scoring and ranking ---

def test_replace_with_original_keeps_scores(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=1, seed=0))
    same = replace_user_embedding(model, user_embedding(model))
    assert np.array_equal(same.user_emb @ same.item_emb.T, model.user_emb @ model.item_emb.T)


def test_replace_with_zeros_zeroes_scores(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=1, seed=0))
    zero = replace_user_embedding(model, np.zeros_like(model.user_emb), method="zeros")
    assert not np.any(zero.user_emb @ zero.item_emb.T)
    assert zero.method == "zeros"
    assert np.array_equal(zero.item_emb, model.item_emb)


def test_replace_single_row_keeps_other_rankings(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=1, seed=0))
    theta = user_embedding(model)
    theta[0] = -theta[0]
    changed = replace_user_embedding(model, theta)
    for u in (1, 2, 3):
        assert recommend_topk(changed, u, 10) == recommend_topk(model, u, 10)


def test_replace_shape_mismatch():
    model = _scoring_model([1.0, 2.0])
    with pytest.raises(ShapeError):
        replace_user_embedding(model, np.zeros((2, 1)))


def test_topk_sorted_oracle():
    assert recommend_topk(_scoring_model([0.9, 0.1, 0.5]), 0, 2) == [0, 2]


def test_topk_single_candidate():
    assert recommend_topk(_scoring_model([0.3, 0.9, 0.5]), 0, 5, exclude=[1, 2]) == [0]


def test_topk_ties_by_ascending_index():
    assert recommend_topk(_scoring_model([0.2] * 5), 0, 5) == [0, 1, 2, 3, 4]


def test_topk_rejects_zero_k():
    with pytest.raises(ValueError):
        recommend_topk(_scoring_model([1.0]), 0, 0)


@pytest.mark.parametrize("rank, cutoff, hr, ndcg", [
    (1, 5, 1.0, 1.0),
    (3, 5, 1.0, 0.5),
    (11, 10, 0.0, 0.0),
])
def test_ranking_fixtures(rank, cutoff, hr, ndcg):
    report = eval_ranking(_scoring_model(RANKING_SCORES), _ranking_fixture(rank - 1), cutoffs=(cutoff,))
    assert report.hr[cutoff] == pytest.approx(hr)
    assert report.ndcg[cutoff] == pytest.approx(ndcg)


def test_full_catalog_cutoff_hits_everything(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=1, seed=0))
    report = eval_ranking(model, dataset, cutoffs=(dataset.n_items,))
    assert report.hr[dataset.n_items] == pytest.approx(1.0)


def test_ranking_invariant_under_monotone_user_transform(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=2, seed=0))
    # scaling each user's row by a positive factor rescales that user's scores only
    factors = np.linspace(0.5, 3.0, model.n_users)[:, None]
    scaled = replace_user_embedding(model, model.user_emb * factors)
    assert eval_ranking(model, dataset).flat() == eval_ranking(scaled, dataset).flat()


def test_report_ranges_and_hr_monotone(synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_mf(dataset, TrainConfig(epochs=3, seed=0))
    report = eval_ranking(model, dataset)
    assert report.hr[5] <= report.hr[10]
    assert all(0.0 <= v <= 1.0 for v in report.flat().values())
    assert report.n_users == dataset.n_users


def test_popularity_ranks_by_train_counts():
    # train counts: items 0, 1, 2 once each, items 3, 4 never
    users = np.array([0, 0, 1, 1, 1])
    items = np.array([0, 1, 1, 2, 3])
    split = np.array([TRAIN, TEST, TRAIN, TRAIN, TEST], dtype=np.int8)
    dataset = InteractionDataset(
        n_users=2, n_items=5, users=users, items=items, ratings=np.ones(5), split=split,
        user_ids=["a", "b"], item_ids=[str(i) for i in range(5)], seed=0, ratios=(0.8, 0.1, 0.1),
    )
    report = eval_popularity(dataset, cutoffs=(1, 2))
    assert report.hr == {1: pytest.approx(0.5), 2: pytest.approx(1.0)}


# --- checkpoints ---

def test_checkpoint_reload(tmp_path, synthetic_dataset):
    dataset, _ = synthetic_dataset
    model = train_lightgcn(dataset, TrainConfig(epochs=1, n_layers=2, seed=5))
    path = save_checkpoint(model, str(tmp_path / "model.ckpt"))
    loaded = load_checkpoint(path, dataset)
    assert np.array_equal(loaded.user_emb, model.user_emb)
    assert np.array_equal(loaded.base_item, model.base_item)
    assert (loaded.kind, loaded.n_layers, loaded.seed, loaded.epoch) == ("LightGCN", 2, 5, 1)
    assert loaded.train_config == model.train_config
    assert (loaded.adjacency != model.adjacency).nnz == 0
    header = (tmp_path / "model.ckpt").read_bytes().split(b"\n", 1)[0].decode()
    assert header.startswith("UNLEARNCKPT v1 kind=LightGCN method=original N=")
