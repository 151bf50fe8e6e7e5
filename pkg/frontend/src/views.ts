/**
 * Pure view-model builders: server JSON in, render-ready structures out.
 *
 * Nothing in this module touches the DOM or the network, which is what makes
 * the rendering rules unit-testable.  The DOM layer (main.ts) only walks the
 * structures produced here.
 */

import type {
  ExplanationDoc,
  ExplanationNode,
  FeatureDoc,
  ModelResponse,
  SchemaDoc,
  SessionStatus,
} from "./api.js";

// ---------------------------------------------------------------------------
// Feature formatting
// ---------------------------------------------------------------------------

/** Render a raw feature value for display; categorical values become labels. */
export function formatFeatureValue(feature: FeatureDoc, value: number): string {
  if (feature.kind === "categorical") {
    const index = Math.round(value);
    if (index < 0 || index >= feature.labels.length) {
      throw new Error(
        `label index ${value} out of range for feature '${feature.name}' (${feature.labels.length} labels)`,
      );
    }
    return feature.labels[index];
  }
  return formatNumber(value);
}

/** Compact numeric formatting: six significant digits, no trailing zeros. */
export function formatNumber(value: number): string {
  if (!Number.isFinite(value)) return String(value);
  return String(Number(value.toPrecision(6)));
}

// ---------------------------------------------------------------------------
// Pending-pair view
// ---------------------------------------------------------------------------

export interface FeatureRow {
  name: string;
  value: string;
}

export interface OptionCard {
  title: string;
  rows: FeatureRow[];
}

export interface PairView {
  kind: "pair";
  sessionId: string;
  modelVersion: number;
  phase: "warmup" | "model";
  progress: string;
  cards: [OptionCard, OptionCard];
}

export interface WaitingView {
  kind: "waiting";
  sessionId: string;
  message: string;
}

function buildCard(title: string, schema: SchemaDoc, values: number[]): OptionCard {
  if (values.length !== schema.features.length) {
    throw new Error(
      `instance has ${values.length} values but the schema has ${schema.features.length} features`,
    );
  }
  return {
    title,
    rows: schema.features.map((feature, i) => ({
      name: feature.name,
      value: formatFeatureValue(feature, values[i]),
    })),
  };
}

/**
 * Progress line shown above the cards.  Warm-up questions are counted against
 * the fixed initial budget; model-phase questions report the model version
 * that generated them.
 */
export function progressLabel(status: SessionStatus): string {
  if (status.phase === "warmup") {
    return `Warm-up question ${status.answered + 1} of ${status.initial_pairs}`;
  }
  const modelQuestion = status.answered - status.initial_pairs + 1;
  return `Model question ${modelQuestion} (model v${status.model_version})`;
}

/**
 * Build the A/B comparison view for the currently pending pair.
 *
 * Card A always shows the first instance of the served pair and card B the
 * second; both cards carry one row per schema feature.  When nothing is
 * pending the caller gets a waiting view instead of cards.
 */
export function buildPairView(schema: SchemaDoc, status: SessionStatus): PairView | WaitingView {
  if (status.pending === null) {
    const message =
      status.state === "finished"
        ? "Session finished."
        : "No question pending — waiting for the server.";
    return { kind: "waiting", sessionId: status.session_id, message };
  }
  return {
    kind: "pair",
    sessionId: status.session_id,
    modelVersion: status.model_version,
    phase: status.phase,
    progress: progressLabel(status),
    cards: [
      buildCard("Option A", schema, status.pending.a),
      buildCard("Option B", schema, status.pending.b),
    ],
  };
}

// ---------------------------------------------------------------------------
// Tree view
// ---------------------------------------------------------------------------

export interface LeafCard {
  kind: "leaf";
  leafIndex: number;
  pairCount: number;
  mean: number | null;
  std: number | null;
  summary: string;
}

export interface RuleNode {
  kind: "rule";
  condition: string;
  otherwise: string;
  splitScore: number;
  discardedCount: number;
  left: TreeNodeView;
  right: TreeNodeView;
}

export type TreeNodeView = LeafCard | RuleNode;

export interface TreeView {
  leafCount: number;
  modelVersion: number;
  stale: boolean;
  root: TreeNodeView;
  /** Leaf cards in document order, i.e. left-to-right across the tree. */
  leaves: LeafCard[];
}

function leafSummary(pairCount: number, mean: number | null, std: number | null): string {
  const comparisons = `${pairCount} comparison${pairCount === 1 ? "" : "s"}`;
  if (mean === null || std === null) return comparisons;
  return `mean ${formatNumber(mean)} ± ${formatNumber(std)} · ${comparisons}`;
}

function buildTreeNode(node: ExplanationNode, leaves: LeafCard[]): TreeNodeView {
  if (node.kind === "leaf") {
    const mean = node.mean ?? null;
    const std = node.std ?? null;
    const card: LeafCard = {
      kind: "leaf",
      leafIndex: node.leaf_index,
      pairCount: node.pair_count,
      mean,
      std,
      summary: leafSummary(node.pair_count, mean, std),
    };
    leaves.push(card);
    return card;
  }
  // Left child first so `leaves` ends up in document order.
  const left = buildTreeNode(node.left, leaves);
  const right = buildTreeNode(node.right, leaves);
  return {
    kind: "rule",
    condition: node.right_label,
    otherwise: node.left_label,
    splitScore: node.split_score,
    discardedCount: node.discarded_count,
    left,
    right,
  };
}

/**
 * Mirror an explanation document as a render-ready tree.
 *
 * The view keeps the document's structure node for node; `leaves` lists the
 * leaf cards left-to-right exactly as they appear in the document.  When the
 * document's version no longer matches the session's current model version
 * the view is flagged stale so the UI can badge it.
 */
export function buildTreeView(
  doc: ExplanationDoc,
  docVersion: number,
  currentVersion: number,
): TreeView {
  const leaves: LeafCard[] = [];
  const root = buildTreeNode(doc.root, leaves);
  return {
    leafCount: doc.leaf_count,
    modelVersion: docVersion,
    stale: docVersion !== currentVersion,
    root,
    leaves,
  };
}

// ---------------------------------------------------------------------------
// Recommendation view
// ---------------------------------------------------------------------------

export interface RecommendationView {
  rows: FeatureRow[];
  statsSummary: string | null;
}

/**
 * Current best guess from the latest model response, or null before the
 * first fit (or before any pair has been observed).
 */
export function buildRecommendationView(
  schema: SchemaDoc,
  model: ModelResponse,
): RecommendationView | null {
  if (model.recommendation === null) return null;
  const card = buildCard("recommendation", schema, model.recommendation);
  let statsSummary: string | null = null;
  if (model.recommendation_stats !== null) {
    const stats = model.recommendation_stats;
    statsSummary = `leaf ${stats.leaf} · mean ${formatNumber(stats.mean)} ± ${formatNumber(stats.std)}`;
  }
  return { rows: card.rows, statsSummary };
}
