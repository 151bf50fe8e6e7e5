"""Sushi preference survey support: data files, rank regret, cohort trees.

Implements the published sushi3 file formats (item features, respondent
features, and the two 10-item ranking files), a deterministic synthetic
corpus generator in the same format for offline work, the top-3 rank-regret
measure used to score predicted item utilities, and respondent-level cohort
trees that warm-start new sessions from similar users' fitted posteriors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import kendalltau

from .acquisition import random_pair_from_pool, select_pair_from_pool
from .domain import (
    Categorical,
    ComparisonPair,
    Continuous,
    FeatureSchema,
    FeatureSpec,
    Instance,
    PreferenceDataset,
)
from .posterior import LatentPosterior, NoiseConfig, fit_leaf_posterior, fit_surrogate
from .tree import (
    SplitTest,
    Threshold,
    TreeConfig,
    TreeNode,
    candidate_tests,
    route,
)

__all__ = [
    "SushiItem",
    "SushiUser",
    "UserRanking",
    "SushiData",
    "item_schema",
    "user_schema",
    "item_instance",
    "user_instance",
    "load_sushi_data",
    "generate_synthetic_sushi",
    "ranking_to_comparisons",
    "ranking_to_id_pairs",
    "rho_regret",
    "RHO_MAX_STRICT",
    "user_split_gain",
    "UserLeaf",
    "UserInternal",
    "UserTreeNode",
    "grow_user_tree",
    "route_user",
    "WarmStart",
    "warm_start_session",
    "simulate_user_session",
    "SushiEvalReport",
    "evaluate_users",
    "write_sushi_csv",
]

_MINOR_GROUPS = (
    "aomono", "akami", "shiromi", "tare", "clam", "squid",
    "shrimp", "roe", "other-seafood", "egg", "meat", "vegetable",
)
_AGE_GROUPS = ("15-19", "20-29", "30-39", "40-49", "50-59", "60+")

#: Penalty for a top-3 membership mistake, by the item's true position (1..10).
_POSITION_VALUE = (1.0, 2 / 3, 1 / 3, 1 / 7, 2 / 7, 3 / 7, 4 / 7, 5 / 7, 6 / 7, 1.0)

#: Largest possible regret when predicted values are all distinct.
RHO_MAX_STRICT = 2.0 + 18.0 / 7.0


# ---------------------------------------------------------------------------
# Records and schemas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SushiItem:
    item_id: int
    name: str
    style: int
    major_group: int
    minor_group: int
    oiliness: float
    eat_frequency: float
    normalized_price: float

    def __post_init__(self) -> None:
        checks = (
            ("style", self.style in (0, 1)),
            ("major_group", self.major_group in (0, 1)),
            ("minor_group", 0 <= self.minor_group <= 11),
            ("oiliness", 0.0 <= self.oiliness <= 4.0),
            ("eat_frequency", 0.0 <= self.eat_frequency <= 3.0),
            ("normalized_price", 0.0 <= self.normalized_price <= 1.0),
        )
        for field_name, ok in checks:
            if not ok:
                raise ValueError(f"item {self.item_id}: {field_name}={getattr(self, field_name)!r} out of range")


@dataclass(frozen=True)
class SushiUser:
    user_id: int
    gender: int
    age_group: int
    survey_seconds: float
    prefecture_child: int
    region_child: int
    east_west_child: int
    prefecture_current: int
    region_current: int
    east_west_current: int
    prefecture_changed: int

    def __post_init__(self) -> None:
        checks = (
            ("gender", self.gender in (0, 1)),
            ("age_group", 0 <= self.age_group <= 5),
            ("survey_seconds", 0.0 <= self.survey_seconds <= 1500.0),
            ("prefecture_child", 0 <= self.prefecture_child <= 47),
            ("region_child", 0 <= self.region_child <= 11),
            ("east_west_child", self.east_west_child in (0, 1)),
            ("prefecture_current", 0 <= self.prefecture_current <= 47),
            ("region_current", 0 <= self.region_current <= 11),
            ("east_west_current", self.east_west_current in (0, 1)),
            ("prefecture_changed", self.prefecture_changed in (0, 1)),
        )
        for field_name, ok in checks:
            if not ok:
                raise ValueError(f"user {self.user_id}: {field_name}={getattr(self, field_name)!r} out of range")


@dataclass(frozen=True)
class UserRanking:
    """One respondent's 10 item ids, most preferred first."""

    user_id: int
    items: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.items) != 10:
            raise ValueError(f"user {self.user_id}: ranking has {len(self.items)} items, expected 10")
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"user {self.user_id}: ranking repeats an item")


@dataclass
class SushiData:
    items: dict[int, SushiItem]
    users: list[SushiUser]
    rankings_a: list[UserRanking]
    rankings_b: list[UserRanking]


def item_schema() -> FeatureSchema:
    return FeatureSchema(
        (
            FeatureSpec("style", Categorical(("maki", "other-style"))),
            FeatureSpec("major_group", Categorical(("seafood", "other-major"))),
            FeatureSpec("minor_group", Categorical(_MINOR_GROUPS)),
            FeatureSpec("oiliness", Continuous(0.0, 4.0)),
            FeatureSpec("eat_frequency", Continuous(0.0, 3.0)),
            FeatureSpec("normalized_price", Continuous(0.0, 1.0)),
        )
    )


def user_schema() -> FeatureSchema:
    prefectures = tuple(f"pref{i}" for i in range(48))
    regions = tuple(f"region{i}" for i in range(12))
    return FeatureSchema(
        (
            FeatureSpec("gender", Categorical(("male", "female"))),
            FeatureSpec("age_group", Categorical(_AGE_GROUPS)),
            FeatureSpec("survey_seconds", Continuous(0.0, 1500.0)),
            FeatureSpec("prefecture_child", Categorical(prefectures)),
            FeatureSpec("region_child", Categorical(regions)),
            FeatureSpec("east_west_child", Categorical(("east", "west"))),
            FeatureSpec("prefecture_current", Categorical(prefectures)),
            FeatureSpec("region_current", Categorical(regions)),
            FeatureSpec("east_west_current", Categorical(("east", "west"))),
            FeatureSpec("prefecture_changed", Categorical(("same", "moved"))),
        )
    )


def item_instance(item: SushiItem) -> Instance:
    return Instance(
        (item.style, item.major_group, item.minor_group,
         float(item.oiliness), float(item.eat_frequency), float(item.normalized_price))
    )


def user_instance(user: SushiUser) -> Instance:
    return Instance(
        (user.gender, user.age_group, float(user.survey_seconds),
         user.prefecture_child, user.region_child, user.east_west_child,
         user.prefecture_current, user.region_current, user.east_west_current,
         user.prefecture_changed)
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
#
# The published sushi3 distribution ships plain-text tables:
#
#   sushi3.idata   one item per line:
#       id  name  style  major_group  minor_group  oiliness  eat_frequency
#       normalized_price  sell_frequency
#     (sell_frequency is parsed and discarded; it is not an item feature here)
#
#   sushi3.udata   one respondent per line:
#       id  gender  age_group  survey_seconds  prefecture/region/east_west
#       until age 15, the same three for the current address, and a flag for
#       whether the prefecture changed
#
#   sushi3a.*.order / sushi3b.*.order   one ranking per respondent, most
#     preferred first:  "<set_id> <count> <item ids...>" with count == 10.
#     A single leading summary line (integers only, not shaped like a data
#     line) is tolerated and skipped.  Line k maps to respondent k of the
#     .udata file.  Every A ranking must draw from one fixed 10-item set.


def _parse_error(path: Path, line_no: int, message: str) -> ValueError:
    return ValueError(f"{path.name}:{line_no}: {message}")


def _load_items(path: Path) -> dict[int, SushiItem]:
    items: dict[int, SushiItem] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        tokens = raw.split()
        if len(tokens) < 9:
            raise _parse_error(path, line_no, f"expected 9 columns, found {len(tokens)}")
        try:
            item = SushiItem(
                item_id=int(tokens[0]),
                name=tokens[1],
                style=int(float(tokens[2])),
                major_group=int(float(tokens[3])),
                minor_group=int(float(tokens[4])),
                oiliness=float(tokens[5]),
                eat_frequency=float(tokens[6]),
                normalized_price=float(tokens[7]),
            )
        except ValueError as exc:
            raise _parse_error(path, line_no, str(exc)) from None
        if item.item_id in items:
            raise _parse_error(path, line_no, f"duplicate item id {item.item_id}")
        items[item.item_id] = item
    if not items:
        raise ValueError(f"{path.name}: no items found")
    return items


def _load_users(path: Path) -> list[SushiUser]:
    users: list[SushiUser] = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        tokens = raw.split()
        if len(tokens) < 11:
            raise _parse_error(path, line_no, f"expected 11 columns, found {len(tokens)}")
        try:
            users.append(
                SushiUser(
                    user_id=int(tokens[0]),
                    gender=int(float(tokens[1])),
                    age_group=int(float(tokens[2])),
                    survey_seconds=float(tokens[3]),
                    prefecture_child=int(float(tokens[4])),
                    region_child=int(float(tokens[5])),
                    east_west_child=int(float(tokens[6])),
                    prefecture_current=int(float(tokens[7])),
                    region_current=int(float(tokens[8])),
                    east_west_current=int(float(tokens[9])),
                    prefecture_changed=int(float(tokens[10])),
                )
            )
        except ValueError as exc:
            raise _parse_error(path, line_no, str(exc)) from None
    if not users:
        raise ValueError(f"{path.name}: no users found")
    return users


def _load_orders(path: Path, users: Sequence[SushiUser], items: Mapping[int, SushiItem]) -> list[UserRanking]:
    rankings: list[UserRanking] = []
    lines = [(n, raw) for n, raw in enumerate(path.read_text().splitlines(), start=1) if raw.strip()]
    if lines:
        tokens = lines[0][1].split()
        looks_like_data = len(tokens) >= 2 and tokens[1].lstrip("-").isdigit() and len(tokens) == int(tokens[1]) + 2
        if not looks_like_data and all(t.lstrip("-").isdigit() for t in tokens):
            lines = lines[1:]  # summary line
    for ordinal, (line_no, raw) in enumerate(lines):
        tokens = raw.split()
        if len(tokens) < 2:
            raise _parse_error(path, line_no, "ranking line needs a set id and a count")
        try:
            count = int(tokens[1])
        except ValueError:
            raise _parse_error(path, line_no, f"count {tokens[1]!r} is not an integer") from None
        if count != 10:
            raise _parse_error(path, line_no, f"expected a 10-item ranking, found count {count}")
        if len(tokens) != count + 2:
            raise _parse_error(path, line_no, f"expected {count} item ids, found {len(tokens) - 2}")
        try:
            ids = tuple(int(t) for t in tokens[2:])
        except ValueError:
            raise _parse_error(path, line_no, "item ids must be integers") from None
        unknown = [i for i in ids if i not in items]
        if unknown:
            raise _parse_error(path, line_no, f"unknown item ids {unknown}")
        if ordinal >= len(users):
            raise _parse_error(path, line_no, f"more rankings than users ({len(users)})")
        try:
            rankings.append(UserRanking(users[ordinal].user_id, ids))
        except ValueError as exc:
            raise _parse_error(path, line_no, str(exc)) from None
    if len(rankings) != len(users):
        raise ValueError(f"{path.name}: {len(rankings)} rankings for {len(users)} users")
    return rankings


def load_sushi_data(directory: str | Path) -> SushiData:
    """Load a sushi3-format directory (idata, udata, and both order files).

    Raises:
        ValueError: malformed lines (reported as ``file:line``), feature
            values outside the documented ranges, rankings referencing
            unknown items, count mismatches between files, or A rankings not
            drawn from one shared 10-item set.
    """
    directory = Path(directory)
    items = _load_items(directory / "sushi3.idata")
    users = _load_users(directory / "sushi3.udata")
    order_a = sorted(directory.glob("sushi3a.*.order")) or [directory / "sushi3a.5000.10.order"]
    order_b = sorted(directory.glob("sushi3b.*.order")) or [directory / "sushi3b.5000.10.order"]
    rankings_a = _load_orders(order_a[0], users, items)
    rankings_b = _load_orders(order_b[0], users, items)
    fixed = set(rankings_a[0].items)
    for ranking in rankings_a:
        if set(ranking.items) != fixed:
            raise ValueError(
                f"dataset A ranking for user {ranking.user_id} uses items {sorted(ranking.items)}, "
                f"expected the fixed set {sorted(fixed)}"
            )
    return SushiData(items, users, rankings_a, rankings_b)


def generate_synthetic_sushi(
    directory: str | Path, n_users: int = 600, seed: int = 0, n_items: int = 100
) -> None:
    """Write a deterministic synthetic corpus in the sushi3 file format.

    Respondents fall into four latent taste profiles keyed by (current
    east/west, gender); each profile weighs item features differently and
    individual rankings add small personal noise.  The cohort signal is what
    the respondent-level tree is meant to recover, and the profile utilities
    give the item-level trees a learnable structure.
    """
    if n_items < 10:
        raise ValueError(f"need at least 10 items, got {n_items}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    minor = rng.integers(0, 12, size=n_items)
    items = []
    for i in range(n_items):
        items.append(
            SushiItem(
                item_id=i,
                name=f"sushi_{i:03d}",
                style=int(rng.random() < 0.8),
                major_group=0 if minor[i] <= 8 else 1,
                minor_group=int(minor[i]),
                oiliness=round(float(rng.uniform(0.0, 4.0)), 2),
                eat_frequency=round(float(rng.uniform(0.0, 3.0)), 2),
                normalized_price=round(float(rng.uniform(0.0, 1.0)), 4),
            )
        )

    profile_count = 4
    w_price = rng.normal(0.0, 1.5, size=profile_count)
    w_oil = rng.normal(0.0, 1.5, size=profile_count)
    w_eat = rng.normal(0.0, 1.5, size=profile_count)
    w_style = rng.normal(0.0, 0.5, size=profile_count)
    w_major = rng.normal(0.0, 0.5, size=profile_count)
    minor_bonus = rng.normal(0.0, 1.0, size=(profile_count, 12))

    def profile_utility(profile: int, item: SushiItem) -> float:
        return float(
            w_price[profile] * item.normalized_price
            + w_oil[profile] * item.oiliness / 4.0
            + w_eat[profile] * item.eat_frequency / 3.0
            + w_style[profile] * item.style
            + w_major[profile] * item.major_group
            + minor_bonus[profile, item.minor_group]
        )

    users = []
    lines_a = []
    lines_b = []
    for uid in range(n_users):
        gender = int(rng.integers(2))
        pref15 = int(rng.integers(48))
        region15 = pref15 // 4
        pref_cur = int(rng.integers(48)) if rng.random() < 0.3 else pref15
        region_cur = pref_cur // 4
        user = SushiUser(
            user_id=uid,
            gender=gender,
            age_group=int(rng.integers(6)),
            survey_seconds=round(float(rng.uniform(30.0, 1450.0)), 1),
            prefecture_child=pref15,
            region_child=region15,
            east_west_child=int(region15 >= 6),
            prefecture_current=pref_cur,
            region_current=region_cur,
            east_west_current=int(region_cur >= 6),
            prefecture_changed=int(pref_cur != pref15),
        )
        users.append(user)
        profile = 2 * user.east_west_current + user.gender
        noise = rng.normal(0.0, 0.3, size=n_items)
        utilities = np.asarray([profile_utility(profile, item) for item in items]) + noise
        set_a = np.arange(10)
        lines_a.append(set_a[np.argsort(-utilities[set_a], kind="stable")])
        set_b = np.sort(rng.choice(n_items, size=10, replace=False))
        lines_b.append(set_b[np.argsort(-utilities[set_b], kind="stable")])

    with open(directory / "sushi3.idata", "w") as fh:
        for item in items:
            sell = round(float(rng.uniform(0.0, 1.0)), 4)
            fh.write(
                f"{item.item_id}\t{item.name}\t{item.style}\t{item.major_group}\t"
                f"{item.minor_group}\t{item.oiliness:g}\t{item.eat_frequency:g}\t"
                f"{item.normalized_price:g}\t{sell:g}\n"
            )
    with open(directory / "sushi3.udata", "w") as fh:
        for u in users:
            fh.write(
                f"{u.user_id}\t{u.gender}\t{u.age_group}\t{u.survey_seconds:g}\t"
                f"{u.prefecture_child}\t{u.region_child}\t{u.east_west_child}\t"
                f"{u.prefecture_current}\t{u.region_current}\t{u.east_west_current}\t"
                f"{u.prefecture_changed}\n"
            )
    for name, lines in ((f"sushi3a.{n_users}.10.order", lines_a), (f"sushi3b.{n_users}.10.order", lines_b)):
        with open(directory / name, "w") as fh:
            fh.write(f"{n_users} 10 10\n")
            for ids in lines:
                fh.write("0 10 " + " ".join(str(int(i)) for i in ids) + "\n")


# ---------------------------------------------------------------------------
# Rankings and regret
# ---------------------------------------------------------------------------

def ranking_to_id_pairs(ranking: UserRanking) -> list[tuple[int, int]]:
    """All 45 (winner_id, loser_id) pairs implied by one 10-item ranking."""
    out = []
    for i in range(len(ranking.items)):
        for j in range(i + 1, len(ranking.items)):
            out.append((ranking.items[i], ranking.items[j]))
    return out


def ranking_to_comparisons(
    ranking: UserRanking, instances: Mapping[int, Instance]
) -> list[ComparisonPair]:
    """Expand a ranking into comparison records over item instances.

    Pairs are ordered by rank positions: (1,2), (1,3), ..., (9,10).
    """
    missing = [i for i in ranking.items if i not in instances]
    if missing:
        raise ValueError(f"ranking references items without instances: {missing}")
    return [
        ComparisonPair(instances[w], instances[l]) for w, l in ranking_to_id_pairs(ranking)
    ]


def rho_regret(true_ranking: UserRanking, predicted_values: Mapping[int, float]) -> float:
    """Top-3 membership regret of predicted utilities against a true ranking.

    Competition ranks are computed from the predicted values (tied items
    share rank 1 + the number of strictly better items); the predicted top
    three are the items with competition rank at most 3.  The regret adds a
    position-dependent penalty for every true-top-3 item that fell out and
    every other item that broke in, so a perfect top three scores 0 even
    when the three are mutually tied.
    """
    missing = [i for i in true_ranking.items if i not in predicted_values]
    if missing:
        raise ValueError(f"predicted values missing for items: {missing}")
    values = [float(predicted_values[i]) for i in true_ranking.items]
    regret = 0.0
    for pos0, value in enumerate(values):
        rank = 1 + sum(1 for other in values if other > value)
        in_predicted_top = rank <= 3
        in_true_top = pos0 < 3
        if in_true_top and not in_predicted_top:
            regret += _POSITION_VALUE[pos0]
        elif in_predicted_top and not in_true_top:
            regret += _POSITION_VALUE[pos0]
    return regret


# ---------------------------------------------------------------------------
# Respondent-level cohort tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UserLeaf:
    """A cohort: its members, their pooled item tree, and its posterior."""

    item_tree: TreeNode
    posterior: LatentPosterior | None
    member_user_ids: tuple[int, ...]


@dataclass(frozen=True)
class UserInternal:
    test: SplitTest
    left: "UserTreeNode"
    right: "UserTreeNode"
    gain: int


UserTreeNode = UserInternal | UserLeaf


def _signed_pair_matrix(
    per_user_pairs: Sequence[Sequence[tuple[int, int]]]
) -> np.ndarray:
    """Users-by-itempairs matrix of net preference counts.

    Column (i, j) with i < j holds, per user, the number of i-beats-j answers
    minus the number of j-beats-i answers.  Agreement tallies reduce to
    absolute column sums over user subsets.
    """
    columns: dict[tuple[int, int], int] = {}
    for pairs in per_user_pairs:
        for w, l in pairs:
            key = (w, l) if w < l else (l, w)
            columns.setdefault(key, len(columns))
    matrix = np.zeros((len(per_user_pairs), len(columns)))
    for row, pairs in enumerate(per_user_pairs):
        for w, l in pairs:
            key = (w, l) if w < l else (l, w)
            matrix[row, columns[key]] += 1.0 if w < l else -1.0
    return matrix


def _tally(matrix: np.ndarray, mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    return int(round(np.abs(matrix[mask].sum(axis=0)).sum()))


def _user_pass_mask(values: np.ndarray, test: SplitTest) -> np.ndarray:
    column = values[:, test.feature_index]
    if isinstance(test.test, Threshold):
        return column >= test.test.value
    return column == float(test.test.label_index)


def user_split_gain(
    user_instances: Sequence[Instance],
    per_user_pairs: Sequence[Sequence[tuple[int, int]]],
    test: SplitTest,
) -> int:
    """Sum of within-child net-agreement tallies under one respondent test.

    For each child and each unordered item pair, the pooled answers
    contribute the absolute difference between the two directions; users who
    disagree cancel.  Splitting apart users with opposite tastes therefore
    raises the tally, while any split of mutually consistent users leaves it
    unchanged.
    """
    if len(user_instances) != len(per_user_pairs):
        raise ValueError(
            f"{len(user_instances)} user instances but {len(per_user_pairs)} comparison sets"
        )
    matrix = _signed_pair_matrix(per_user_pairs)
    values = np.asarray([u.values for u in user_instances], dtype=float)
    mask = _user_pass_mask(values, test)
    return _tally(matrix, mask) + _tally(matrix, ~mask)


def grow_user_tree(
    users: Sequence[SushiUser],
    per_user_pairs: Sequence[Sequence[tuple[int, int]]],
    item_instances: Mapping[int, Instance],
    user_config: TreeConfig,
    item_config: TreeConfig,
    noise: NoiseConfig,
) -> UserTreeNode:
    """Partition respondents into taste cohorts and fit each cohort's model.

    Candidate tests follow the same enumeration and tie-break rules as the
    item tree.  A node splits only when the best child tally strictly
    exceeds the node's own (splitting consistent users can never help, so
    fully agreeing populations stay in one cohort).  Each final cohort pools
    its members' comparisons and fits an item tree plus posterior.
    """
    if len(users) != len(per_user_pairs):
        raise ValueError(f"{len(users)} users but {len(per_user_pairs)} comparison sets")
    if not users:
        raise ValueError("cannot grow a respondent tree without users")
    schema = user_schema()
    instances = [user_instance(u) for u in users]
    values = np.asarray([inst.values for inst in instances], dtype=float)
    matrix = _signed_pair_matrix(per_user_pairs)

    def fit_leaf(member_rows: np.ndarray) -> UserLeaf:
        dataset = PreferenceDataset(item_schema())
        for row in member_rows:
            for w, l in per_user_pairs[row]:
                dataset.append(ComparisonPair(item_instances[w], item_instances[l]))
        tree, post = fit_surrogate(dataset, item_config, noise)
        return UserLeaf(tree, post, tuple(users[row].user_id for row in member_rows))

    def build(rows: np.ndarray, depth: int) -> UserTreeNode:
        if depth >= user_config.max_depth or len(rows) < user_config.min_samples_split:
            return fit_leaf(rows)
        parent = _tally(matrix, np.isin(np.arange(len(users)), rows))
        local_values = values[rows]
        best: tuple[int, SplitTest, np.ndarray] | None = None
        for test in candidate_tests(schema, local_values):
            mask = _user_pass_mask(local_values, test)
            full_mask = np.zeros(len(users), dtype=bool)
            full_mask[rows[mask]] = True
            other = np.zeros(len(users), dtype=bool)
            other[rows[~mask]] = True
            gain = _tally(matrix, full_mask) + _tally(matrix, other)
            if best is None or gain > best[0]:
                best = (gain, test, mask)
        if best is None or best[0] <= parent:
            return fit_leaf(rows)
        _, test, mask = best
        return UserInternal(
            test,
            build(rows[~mask], depth + 1),
            build(rows[mask], depth + 1),
            best[0],
        )

    return build(np.arange(len(users)), 0)


def route_user(tree: UserTreeNode, instance: Instance) -> UserLeaf:
    node = tree
    while isinstance(node, UserInternal):
        value = float(instance.values[node.test.feature_index])
        if isinstance(node.test.test, Threshold):
            passes = value >= node.test.test.value
        else:
            passes = value == float(node.test.test.label_index)
        node = node.right if passes else node.left
    return node


@dataclass(frozen=True)
class WarmStart:
    """Frozen cohort structure plus a widened prior around its posterior mean."""

    item_tree: TreeNode
    prior_mean: np.ndarray
    inflation: float


def warm_start_session(tree: UserTreeNode, user: Instance | SushiUser, inflation: float) -> WarmStart:
    """Route a new respondent to their cohort and widen its posterior.

    The cohort's item tree is frozen; its posterior mean becomes the new
    session's prior mean with an isotropic prior of scale ``inflation``
    (covariance ``inflation**2 I``), so cohort knowledge guides early
    questions without pinning the individual down.
    """
    if inflation <= 0:
        raise ValueError(f"inflation must be positive, got {inflation}")
    instance = user_instance(user) if isinstance(user, SushiUser) else user
    leaf = route_user(tree, instance)
    if leaf.posterior is None:
        raise ValueError(f"cohort for users {leaf.member_user_ids} has no fitted posterior")
    return WarmStart(leaf.item_tree, leaf.posterior.mean.copy(), inflation)


# ---------------------------------------------------------------------------
# Simulated sessions
# ---------------------------------------------------------------------------

@dataclass
class SessionResult:
    """Regret trajectory and final predictions of one simulated session."""

    rho_curve: list[float]
    final_predicted: dict[int, float]


def simulate_user_session(
    ranking: UserRanking,
    item_instances: Mapping[int, Instance],
    *,
    queries: int,
    acquisition: str = "qeubo",
    item_config: TreeConfig | None = None,
    noise: NoiseConfig | None = None,
    seed: int = 0,
    warm: WarmStart | None = None,
) -> SessionResult:
    """Simulate one respondent answering adaptive questions about their items.

    The candidate pool is the respondent's own 10 items; answers follow the
    true ranking.  After each refit (including the data-free one before the
    first question) the rank regret of the predicted item values is
    recorded, so the curve has ``queries + 1`` entries.  Cold sessions
    regrow the item tree each round; warm sessions keep the cohort tree
    frozen and refit around the widened cohort prior.
    """
    if acquisition not in ("qeubo", "random"):
        raise ValueError(f"unknown acquisition {acquisition!r}")
    item_config = item_config or TreeConfig(max_depth=5)
    noise = noise or NoiseConfig()
    schema = item_schema()
    pool = [item_instances[i] for i in ranking.items]
    position = {i: pos for pos, i in enumerate(ranking.items)}
    by_instance = {item_instances[i]: i for i in ranking.items}

    dataset = PreferenceDataset(schema)
    rng = np.random.default_rng(seed)
    curve: list[float] = []
    predicted: dict[int, float] = {}
    for q in range(queries + 1):
        if warm is None:
            tree, post = fit_surrogate(dataset, item_config, noise)
        else:
            tree = warm.item_tree
            post = fit_leaf_posterior(
                tree, dataset, NoiseConfig(noise.sigma_noise, warm.inflation), warm.prior_mean
            )
        predicted = {i: float(post.mean[route(tree, item_instances[i])]) for i in ranking.items}
        curve.append(rho_regret(ranking, predicted))
        if q == queries:
            break
        if acquisition == "qeubo":
            a, b = select_pair_from_pool(
                tree, post, schema, pool,
                prioritize_within_leaf=True,
                saturation_pairs=item_config.min_samples_split * 4,
            )
        else:
            a, b = random_pair_from_pool(pool, rng)
        if position[by_instance[a]] < position[by_instance[b]]:
            dataset.append(ComparisonPair(a, b))
        else:
            dataset.append(ComparisonPair(b, a))
    return SessionResult(curve, predicted)


@dataclass
class SushiEvalReport:
    """Per-user regret curves for one evaluation sweep."""

    dataset: str
    acquisition: str
    warm_start: bool
    user_ids: list[int]
    warm_flags: list[bool]
    rho_curves: list[list[float]]
    kendall_taus: list[float]
    queries_to_threshold: list[int]

    def mean_curve(self) -> np.ndarray:
        return np.asarray(self.rho_curves).mean(axis=0)


def evaluate_users(
    data: SushiData,
    dataset: str,
    n_users: int,
    queries: int,
    acquisition: str = "qeubo",
    warm_start: bool = False,
    *,
    user_config: TreeConfig | None = None,
    item_config: TreeConfig | None = None,
    noise: NoiseConfig | None = None,
    seed: int = 0,
    cohort_size: int = 50,
    inflation: float | None = None,
    rho_threshold: float = 1.0,
) -> SushiEvalReport:
    """Stream simulated sessions over the first ``n_users`` respondents.

    Without warm starting every session is independent.  With it, the
    respondent tree is retrained after every ``cohort_size`` completed users
    on their full rankings, and later users start from their cohort's
    posterior; the first cohort necessarily runs cold.  ``kendall_taus``
    holds the final-query tau-b between predicted and true orders as a
    diagnostic.
    """
    if dataset not in ("A", "B"):
        raise ValueError(f"dataset must be 'A' or 'B', got {dataset!r}")
    rankings = data.rankings_a if dataset == "A" else data.rankings_b
    if n_users > len(rankings):
        raise ValueError(f"requested {n_users} users but data has {len(rankings)}")
    user_config = user_config or TreeConfig(max_depth=5)
    item_config = item_config or TreeConfig(max_depth=5)
    noise = noise or NoiseConfig()
    inflation = inflation if inflation is not None else 10.0 * noise.sigma_prior
    instances = {i: item_instance(item) for i, item in data.items.items()}
    by_id = {u.user_id: u for u in data.users}

    user_tree: UserTreeNode | None = None
    curves: list[list[float]] = []
    warm_flags: list[bool] = []
    taus: list[float] = []
    hits: list[int] = []
    for idx in range(n_users):
        ranking = rankings[idx]
        warm = None
        if warm_start and user_tree is not None:
            warm = warm_start_session(user_tree, by_id[ranking.user_id], inflation)
        result = simulate_user_session(
            ranking, instances,
            queries=queries, acquisition=acquisition,
            item_config=item_config, noise=noise,
            seed=seed + idx, warm=warm,
        )
        curves.append(result.rho_curve)
        warm_flags.append(warm is not None)
        below = [q for q, rho in enumerate(result.rho_curve) if rho <= rho_threshold]
        hits.append(below[0] if below else queries + 1)
        taus.append(_tau_against_truth(ranking, result.final_predicted))
        if warm_start and (idx + 1) % cohort_size == 0:
            seen = rankings[: idx + 1]
            user_tree = grow_user_tree(
                [by_id[r.user_id] for r in seen],
                [ranking_to_id_pairs(r) for r in seen],
                instances,
                user_config, item_config, noise,
            )
    return SushiEvalReport(
        dataset, acquisition, warm_start,
        [rankings[i].user_id for i in range(n_users)],
        warm_flags, curves, taus, hits,
    )


def _tau_against_truth(ranking: UserRanking, predicted: Mapping[int, float]) -> float:
    """Kendall tau-b between the predicted and true orders (diagnostic only)."""
    truth = list(range(len(ranking.items)))
    scores = [-predicted[i] for i in ranking.items]
    tau = kendalltau(truth, scores).correlation
    return float(tau) if tau is not None and not math.isnan(tau) else 0.0


def write_sushi_csv(report: SushiEvalReport, path: str | Path) -> None:
    """One row per (user, query): rank-regret curves plus per-user summary columns."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["user_index", "user_id", "warm", "query", "rho_regret", "kendall_tau_final", "queries_to_threshold"]
        )
        for idx, curve in enumerate(report.rho_curves):
            for q, rho in enumerate(curve):
                writer.writerow(
                    [
                        idx,
                        report.user_ids[idx],
                        int(report.warm_flags[idx]),
                        q,
                        f"{rho:.6g}",
                        f"{report.kendall_taus[idx]:.4f}",
                        report.queries_to_threshold[idx],
                    ]
                )
