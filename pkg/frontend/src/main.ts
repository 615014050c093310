import { ApiClient } from "./api.js";
import { LiveStream } from "./api.js";
import { DashboardModel } from "./model.js";
import { Ui } from "./ui.js";

const base = ""; // same origin; serve the dist/ directory from the aggregator

async function boot(): Promise<void> {
  const api = new ApiClient(base);
  const model = new DashboardModel(api);
  const ui = new Ui(model, api);
  ui.bind();

  const stream = new LiveStream(`${base}/api/v1/stream`);
  stream.onEvent = (record) => model.applyEvent(record);
  stream.onStatus = (status, gap) => {
    model.setConnection(status, gap);
    if (status === "live") {
      // every (re)connect resynchronizes from the snapshot endpoints,
      // then any queued operator actions go out
      void model.resync().then(() => model.flushPending());
    }
  };
  stream.start();
  try {
    await model.resync();
  } catch {
    model.setConnection("degraded");
  }
}

void boot();
