#include "seqx/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <optional>
#include <thread>

#include "seqx/alignment.hpp"
#include "seqx/error.hpp"

namespace seqx {

using json = nlohmann::ordered_json;

ExtractResult extract_features(const Dataset& docs, const std::vector<BackendClient>& roster, std::size_t jobs) {
  if (roster.empty()) throw InputError("roster is empty");
  const std::size_t n_docs = docs.docs.size();
  const std::size_t n_backends = roster.size();
  const std::size_t n_tasks = n_docs * n_backends;

  struct Slot {
    std::optional<LogProbResponse> response;
    std::string error;
    bool transport = false;
  };
  std::vector<Slot> slots(n_tasks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t task = next++; task < n_tasks; task = next++) {
      const auto& doc = docs.docs[task / n_backends];
      const auto& backend = roster[task % n_backends];
      Slot& slot = slots[task];
      try {
        slot.response = backend.fetch_logprobs(doc.text);
      } catch (const TransportError& e) {
        slot.error = e.what();
        slot.transport = true;
      } catch (const Error& e) {
        slot.error = e.what();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, n_tasks));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  ExtractResult out;
  out.dataset.categories = docs.categories;
  for (const auto& b : roster) out.dataset.backends.push_back(b.name());
  bool all_transport = n_tasks > 0;
  for (std::size_t d = 0; d < n_docs; ++d) {
    const auto& doc = docs.docs[d];
    std::vector<LogProbResponse> responses;
    bool ok = true;
    for (std::size_t b = 0; b < n_backends; ++b) {
      Slot& slot = slots[d * n_backends + b];
      if (!slot.response) {
        ok = false;
        out.failures.push_back({{"id", doc.id}, {"backend", roster[b].name()}, {"error", slot.error}});
        continue;
      }
      all_transport = false;
      responses.push_back(std::move(*slot.response));
    }
    if (!ok) continue;
    LabeledDocument featured = doc;
    featured.features = assemble(doc.text, responses);
    out.dataset.docs.push_back(std::move(featured));
  }
  if (all_transport) {
    bool every_failure_transport = true;
    for (const auto& s : slots) every_failure_transport = every_failure_transport && s.transport;
    if (every_failure_transport) throw TransportError("roster", "all backends are unreachable");
  }
  return out;
}

json RunManifest::to_json(double wall_clock_seconds) const {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json j{{"command", command},     {"tool_version", kToolVersion},
         {"seed", seed},           {"config", config},
         {"inputs", inputs},       {"outputs", outputs},
         {"timestamp", stamp},     {"wall_clock_seconds", wall_clock_seconds}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

void write_manifest(const RunManifest& manifest, double wall_clock_seconds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write manifest " + path);
  out << manifest.to_json(wall_clock_seconds).dump(2) << "\n";
}

}  // namespace seqx
