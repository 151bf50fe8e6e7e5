/**
 * DOM wiring: one active session per tab, rendered from controller state.
 *
 * All logic lives in views.ts / controller.ts; this file only builds DOM
 * nodes from view models and forwards clicks.
 */

import { SessionClient, type Transport } from "./api.js";
import { SessionController } from "./controller.js";
import {
  buildPairView,
  buildRecommendationView,
  buildTreeView,
  type LeafCard,
  type OptionCard,
  type TreeNodeView,
} from "./views.js";

const DEFAULT_SCHEMA = `{
  "features": [
    {"name": "sweetness", "kind": "continuous", "bounds": [0.0, 1.0]},
    {"name": "body", "kind": "continuous", "bounds": [0.0, 1.0]},
    {"name": "roast", "kind": "categorical", "labels": ["light", "medium", "dark"]}
  ]
}`;

const DEFAULT_CONFIG = `{"initial_pairs": 5}`;

const transport: Transport = (path, init) => fetch(path, init);
const controller = new SessionController(new SessionClient(transport));

function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

function renderCard(card: OptionCard, onChoose: (() => void) | null): HTMLElement {
  const rows = card.rows.map((row) =>
    el("tr", {}, [el("th", {}, [row.name]), el("td", {}, [row.value])]),
  );
  const children: (Node | string)[] = [
    el("h3", {}, [card.title]),
    el("table", { class: "feature-table" }, rows),
  ];
  if (onChoose !== null) {
    const button = el("button", { class: "choose" }, [`Prefer ${card.title}`]);
    button.addEventListener("click", onChoose);
    if (!controller.canAnswer) button.setAttribute("disabled", "");
    children.push(button);
  }
  return el("div", { class: "card" }, children);
}

function renderLeaf(leaf: LeafCard): HTMLElement {
  return el("li", { class: "leaf" }, [`leaf ${leaf.leafIndex} — ${leaf.summary}`]);
}

function renderTreeNode(node: TreeNodeView): HTMLElement {
  if (node.kind === "leaf") return renderLeaf(node);
  return el("li", { class: "rule" }, [
    el("span", { class: "condition" }, [
      `if ${node.condition}  (score ${node.splitScore}, dropped ${node.discardedCount})`,
    ]),
    el("ul", {}, [renderTreeNode(node.right)]),
    el("span", { class: "condition" }, [`else (${node.otherwise})`]),
    el("ul", {}, [renderTreeNode(node.left)]),
  ]);
}

function renderModelPanel(): HTMLElement {
  const panel = el("section", { class: "panel" }, [el("h2", {}, ["Preference model"])]);
  const model = controller.model;
  const schema = controller.schema;
  const status = controller.status;
  if (model === null || !model.fitted || model.explanation === null || schema === null || status === null) {
    panel.append(el("p", { class: "muted" }, ["No model yet — still in warm-up."]));
    return panel;
  }
  const tree = buildTreeView(model.explanation, model.model_version, status.model_version);
  const heading = el("p", {}, [
    `Model v${tree.modelVersion} · ${tree.leafCount} leaf group${tree.leafCount === 1 ? "" : "s"}`,
  ]);
  if (tree.stale) heading.append(el("span", { class: "badge stale" }, ["stale"]));
  panel.append(heading, el("ul", { class: "tree" }, [renderTreeNode(tree.root)]));

  const rec = buildRecommendationView(schema, model);
  if (rec !== null) {
    panel.append(el("h3", {}, ["Current best guess"]));
    panel.append(
      el(
        "table",
        { class: "feature-table" },
        rec.rows.map((row) => el("tr", {}, [el("th", {}, [row.name]), el("td", {}, [row.value])])),
      ),
    );
    if (rec.statsSummary !== null) panel.append(el("p", { class: "muted" }, [rec.statsSummary]));
  }
  return panel;
}

function renderSurveyPanel(): HTMLElement {
  const panel = el("section", { class: "panel" }, [el("h2", {}, ["Which do you prefer?"])]);
  const status = controller.status;
  const schema = controller.schema;
  if (status === null || schema === null) return panel;

  if (controller.lastError !== null) {
    panel.append(el("p", { class: "error" }, [`Server: ${controller.lastError}`]));
  }

  const view = buildPairView(schema, status);
  if (view.kind === "waiting") {
    panel.append(el("p", { class: "waiting" }, [view.message]));
  } else {
    panel.append(el("p", { class: "progress" }, [view.progress]));
    const choose = (choice: "A" | "B") => () => {
      void controller.answer(choice).then(render);
    };
    panel.append(
      el("div", { class: "pair" }, [
        renderCard(view.cards[0], choose("A")),
        renderCard(view.cards[1], choose("B")),
      ]),
    );
  }

  if (status.state !== "finished") {
    const finish = el("button", { class: "finish" }, ["I'm satisfied — finish"]);
    finish.addEventListener("click", () => {
      void controller.finishSession().then(render);
    });
    panel.append(finish);
  } else if (controller.finishSummary !== null) {
    panel.append(
      el("p", {}, [`Finished after ${controller.finishSummary.answered} comparisons.`]),
    );
  }
  return panel;
}

function renderSetupPanel(): HTMLElement {
  const schemaInput = el("textarea", { rows: "8" }, [DEFAULT_SCHEMA]) as HTMLTextAreaElement;
  const configInput = el("textarea", { rows: "2" }, [DEFAULT_CONFIG]) as HTMLTextAreaElement;
  const startButton = el("button", {}, ["Start session"]);
  const errorLine = el("p", { class: "error" });
  startButton.addEventListener("click", () => {
    let schema: unknown;
    let config: unknown;
    try {
      schema = JSON.parse(schemaInput.value);
      config = configInput.value.trim() === "" ? null : JSON.parse(configInput.value);
    } catch (parseError) {
      errorLine.textContent = `Invalid JSON: ${String(parseError)}`;
      return;
    }
    startButton.setAttribute("disabled", "");
    controller
      .start(schema as never, config as never)
      .then(render)
      .catch((error) => {
        startButton.removeAttribute("disabled");
        errorLine.textContent = String(error);
      });
  });
  return el("section", { class: "panel" }, [
    el("h2", {}, ["New session"]),
    el("label", {}, ["Feature schema (JSON)"]),
    schemaInput,
    el("label", {}, ["Config (JSON, optional)"]),
    configInput,
    startButton,
    errorLine,
  ]);
}

function render(): void {
  const app = document.getElementById("app");
  if (app === null) return;
  app.replaceChildren();
  if (controller.status === null) {
    app.append(renderSetupPanel());
    return;
  }
  app.append(renderSurveyPanel(), renderModelPanel());
}

render();
