// Account lookup pane: score gauge, daily activity, top hashtags. Scores are
// never computed here; the pane renders exactly what the service returned.

import { ApiClient, ApiHttpError, InsightsResponse, ScoreResponse } from "./api.js";
import { renderActivityChart, renderGauge, renderHashtagChart } from "./charts.js";

export class LookupView {
  private sequence = 0;
  private readonly banner: HTMLElement;
  private readonly gauge: HTMLElement;
  private readonly summary: HTMLElement;
  private readonly activity: HTMLElement;
  private readonly hashtags: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.banner = this.section("lookup-banner");
    this.gauge = this.section("lookup-gauge");
    this.summary = this.section("lookup-summary");
    this.activity = this.section("lookup-activity");
    this.hashtags = this.section("lookup-hashtags");
  }

  private section(className: string): HTMLElement {
    const el = document.createElement("div");
    el.className = className;
    this.root.appendChild(el);
    return el;
  }

  private clearResults(): void {
    this.gauge.replaceChildren();
    this.summary.replaceChildren();
    this.activity.replaceChildren();
    this.hashtags.replaceChildren();
  }

  private showBanner(kind: string, text: string, retry?: () => void): void {
    this.banner.replaceChildren();
    const note = document.createElement("div");
    note.className = `banner ${kind}`;
    note.textContent = text;
    this.banner.appendChild(note);
    if (retry) {
      const button = document.createElement("button");
      button.className = "retry";
      button.textContent = "retry";
      button.addEventListener("click", retry);
      note.appendChild(button);
    }
  }

  /** Fetch and render one account. Out-of-order responses are dropped. */
  async show(username: string): Promise<void> {
    const ticket = ++this.sequence;
    this.showBanner("loading", `loading ${username}...`);
    let score: ScoreResponse;
    let insights: InsightsResponse;
    try {
      [score, insights] = await Promise.all([
        this.api.score(username),
        this.api.insights(username),
      ]);
    } catch (err) {
      if (ticket !== this.sequence) {
        return; // a newer lookup superseded this one
      }
      this.clearResults();
      if (err instanceof ApiHttpError && err.status === 404) {
        this.showBanner("not-found", `account ${username} not found`);
      } else if (err instanceof ApiHttpError && err.status === 503) {
        this.showBanner("unavailable", "service unavailable", () => {
          void this.show(username);
        });
      } else {
        this.showBanner("error", err instanceof Error ? err.message : String(err));
      }
      return;
    }
    if (ticket !== this.sequence) {
      return;
    }
    this.banner.replaceChildren();
    this.render(score, insights);
  }

  private render(score: ScoreResponse, insights: InsightsResponse): void {
    renderGauge(this.gauge, score.bot_likelihood_percent);

    this.summary.replaceChildren();
    const heading = document.createElement("h2");
    heading.className = "lookup-username";
    heading.textContent = score.username;
    this.summary.appendChild(heading);
    const rules = document.createElement("p");
    rules.className = "fired-rules";
    rules.textContent = score.heuristic.fired_rules.length > 0
      ? `heuristic rules fired: ${score.heuristic.fired_rules.join(", ")}`
      : "no heuristic rules fired";
    this.summary.appendChild(rules);
    const model = document.createElement("p");
    model.className = "model-version";
    model.textContent = `model ${score.model_version}, ${insights.post_count} posts`;
    this.summary.appendChild(model);

    renderActivityChart(this.activity, insights.daily_activity);
    renderHashtagChart(this.hashtags, insights.top_hashtags);
  }
}
