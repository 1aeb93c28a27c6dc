import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, InsightsResponse, ScoreResponse } from "../src/api.js";
import { LookupView } from "../src/lookup.js";

function makeScore(username: string, percent: number): ScoreResponse {
  return {
    username,
    bot_likelihood_percent: percent,
    heuristic: { score: 0.85, fired_rules: ["R1", "R3"], is_bot: true },
    model_version: "abc123def456",
    features: { posts_per_day: 120.0 },
  };
}

function makeInsights(username: string, days: Array<[string, number]>): InsightsResponse {
  return {
    username,
    post_count: days.reduce((acc, [, c]) => acc + c, 0),
    kind_counts: { original: 1, comment: 0, echo: 0 },
    daily_activity: days.map(([date, count]) => ({ date, count })),
    top_hashtags: [
      { tag: "alpha", count: 4 },
      { tag: "beta", count: 2 },
    ],
  };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status });
}

/** Routes score/insights fetches; unmatched usernames get the fallback. */
function routedFetch(
  routes: Record<string, { score: ScoreResponse; insights: InsightsResponse }>,
  fallback: () => Response,
) {
  return vi.fn().mockImplementation((url: string) => {
    for (const [username, payloads] of Object.entries(routes)) {
      if (url.includes(`/accounts/${username}/score`)) {
        return Promise.resolve(jsonResponse(payloads.score));
      }
      if (url.includes(`/accounts/${username}/insights`)) {
        return Promise.resolve(jsonResponse(payloads.insights));
      }
    }
    return Promise.resolve(fallback());
  });
}

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = "<div id='root'></div>";
  root = document.getElementById("root") as HTMLElement;
});

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("LookupView", () => {
  it("displays the server percentage verbatim to one decimal", async () => {
    vi.stubGlobal("fetch", routedFetch(
      {
        suspect: {
          score: makeScore("suspect", 73.0),
          insights: makeInsights("suspect", [["2020-10-01", 3]]),
        },
      },
      () => jsonResponse({ error: "account_not_found", message: "nope" }, 404),
    ));

    const view = new LookupView(root, new ApiClient());
    await view.show("suspect");

    expect(root.querySelector(".gauge-label")?.textContent).toBe("73.0%");
    expect(root.querySelector(".lookup-username")?.textContent).toBe("suspect");
    expect(root.querySelector(".fired-rules")?.textContent).toContain("R1, R3");
  });

  it("plots one bucket per server-provided day", async () => {
    vi.stubGlobal("fetch", routedFetch(
      {
        steady: {
          score: makeScore("steady", 12.4),
          insights: makeInsights("steady", [
            ["2020-10-01", 2],
            ["2020-10-02", 0],
            ["2020-10-03", 5],
          ]),
        },
      },
      () => jsonResponse({ error: "account_not_found", message: "nope" }, 404),
    ));

    const view = new LookupView(root, new ApiClient());
    await view.show("steady");

    const buckets = root.querySelectorAll(".bucket");
    expect(buckets.length).toBe(3);
    expect(buckets[1].getAttribute("data-date")).toBe("2020-10-02");
    expect(buckets[1].getAttribute("data-count")).toBe("0");
    expect(root.querySelectorAll(".hashtag-bar").length).toBe(2);
  });

  it("shows a not-found state on 404 and drops stale charts", async () => {
    vi.stubGlobal("fetch", routedFetch(
      {
        known: {
          score: makeScore("known", 55.5),
          insights: makeInsights("known", [["2020-10-01", 1]]),
        },
      },
      () => jsonResponse({ error: "account_not_found", message: "nope" }, 404),
    ));

    const view = new LookupView(root, new ApiClient());
    await view.show("known");
    expect(root.querySelector(".gauge-label")).not.toBeNull();

    await view.show("ghost");
    expect(root.querySelector(".banner.not-found")?.textContent)
      .toContain("account ghost not found");
    expect(root.querySelector(".gauge-label")).toBeNull();
    expect(root.querySelectorAll(".bucket").length).toBe(0);
  });

  it("offers a retry that refetches after a 503", async () => {
    let available = false;
    const score = makeScore("flaky", 90.0);
    const insights = makeInsights("flaky", [["2020-10-01", 1]]);
    const fetchMock = vi.fn().mockImplementation((url: string) => {
      if (!available) {
        return Promise.resolve(
          jsonResponse({ error: "model_not_loaded", message: "no model loaded" }, 503),
        );
      }
      return Promise.resolve(jsonResponse(url.includes("/score") ? score : insights));
    });
    vi.stubGlobal("fetch", fetchMock);

    const view = new LookupView(root, new ApiClient());
    await view.show("flaky");
    const retry = root.querySelector<HTMLButtonElement>(".banner.unavailable .retry");
    expect(retry).not.toBeNull();

    available = true;
    retry!.click();
    await vi.waitFor(() => {
      expect(root.querySelector(".gauge-label")?.textContent).toBe("90.0%");
    });
  });

  it("discards an out-of-order response from a superseded lookup", async () => {
    const resolvers = new Map<string, (r: Response) => void>();
    const fetchMock = vi.fn().mockImplementation((url: string) => {
      return new Promise<Response>((resolve) => {
        resolvers.set(url, resolve);
      });
    });
    vi.stubGlobal("fetch", fetchMock);

    const view = new LookupView(root, new ApiClient());
    const first = view.show("slowpoke");
    const second = view.show("fastlane");

    // the newer lookup finishes first
    resolvers.get("/api/v1/accounts/fastlane/score")!(
      jsonResponse(makeScore("fastlane", 20.0)));
    resolvers.get("/api/v1/accounts/fastlane/insights")!(
      jsonResponse(makeInsights("fastlane", [["2020-10-01", 1]])));
    await second;
    expect(root.querySelector(".lookup-username")?.textContent).toBe("fastlane");

    // the stale one trickles in afterwards and must not clobber the pane
    resolvers.get("/api/v1/accounts/slowpoke/score")!(
      jsonResponse(makeScore("slowpoke", 99.9)));
    resolvers.get("/api/v1/accounts/slowpoke/insights")!(
      jsonResponse(makeInsights("slowpoke", [["2020-10-02", 7]])));
    await first;
    expect(root.querySelector(".lookup-username")?.textContent).toBe("fastlane");
    expect(root.querySelector(".gauge-label")?.textContent).toBe("20.0%");
  });
});
