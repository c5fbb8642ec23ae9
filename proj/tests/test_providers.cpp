#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmregress/providers.hpp"
#include "support/fixtures.hpp"

using namespace llmregress;
using providers::ModelRef;
using providers::ReplayMode;
using providers::ReplayStore;
using providers::SamplingParams;
using prompts::PromptMode;
using testsupport::TempDir;
using nlohmann::json;

namespace {

ModelRef completion_model() {
  return ModelRef{"openai", "gpt-3.5-turbo-instruct", PromptMode::COMPLETION, ""};
}

ModelRef chat_model() {
  return ModelRef{"openai", "gpt-3.5-turbo-0613", PromptMode::CHAT, ""};
}

providers::RenderedPrompt p1_rendered() {
  providers::RenderedPrompt prompt;
  prompt.mode = PromptMode::COMPLETION;
  prompt.completion_text =
      "Classify the GitHub discussion as \"toxic\" or \"non-toxic\". Only reply "
      "with the label.\nDocument: hi there";
  return prompt;
}

providers::RenderedPrompt p1_chat_rendered() {
  providers::RenderedPrompt prompt;
  prompt.mode = PromptMode::CHAT;
  prompt.messages.push_back({"user", p1_rendered().completion_text});
  return prompt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Deterministic canned provider for record/replay tests.
class CannedProvider : public providers::Provider {
 public:
  std::vector<providers::SampleResponse> fetch(
      const ModelRef&, const providers::RenderedPrompt&, const SamplingParams&,
      const std::vector<int>& indices) const override {
    std::vector<providers::SampleResponse> out;
    for (int index : indices) {
      providers::SampleResponse r;
      r.sample_index = index;
      r.raw_text = index % 2 == 0 ? "toxic" : "non-toxic";
      r.finish_reason = "stop";
      r.usage = {11, 1};
      r.latency_ms = 5;
      out.push_back(std::move(r));
    }
    return out;
  }
};

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};

  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&,
                                         int)> handler) {
    auto wrapped = [this, handler](const httplib::Request& req,
                                   httplib::Response& res) {
      handler(req, res, ++requests);
    };
    server.Post("/v1/completions", wrapped);
    server.Post("/v1/chat/completions", wrapped);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubServer() {
    server.stop();
    thread.join();
  }

  std::string base_url() const {
    return "http://127.0.0.1:" + std::to_string(port) + "/v1";
  }
};

void respond_choices(httplib::Response& res, int n, const std::string& text) {
  json choices = json::array();
  for (int i = 0; i < n; ++i) {
    choices.push_back({{"index", i}, {"text", text}, {"finish_reason", "stop"}});
  }
  json body = {{"choices", choices},
               {"usage", {{"prompt_tokens", 9}, {"completion_tokens", 1}}}};
  res.set_content(body.dump(), "application/json");
}

}  // namespace

TEST_CASE("completion request bodies match the golden bytes") {
  auto golden_dir = testsupport::fixture_root() / "golden";
  SamplingParams cold = SamplingParams::point_prediction();
  SamplingParams warm = SamplingParams::confidence_profile();
  CHECK(providers::serialize_request(completion_model(), p1_rendered(), cold) ==
        read_file(golden_dir / "completion_t0_n1.json"));
  CHECK(providers::serialize_request(completion_model(), p1_rendered(), warm) ==
        read_file(golden_dir / "completion_t07_n20.json"));
}

TEST_CASE("chat request bodies match the golden bytes") {
  auto golden_dir = testsupport::fixture_root() / "golden";
  SamplingParams cold = SamplingParams::point_prediction();
  SamplingParams warm = SamplingParams::confidence_profile();
  CHECK(providers::serialize_request(chat_model(), p1_chat_rendered(), cold) ==
        read_file(golden_dir / "chat_t0_n1.json"));
  CHECK(providers::serialize_request(chat_model(), p1_chat_rendered(), warm) ==
        read_file(golden_dir / "chat_t07_n20.json"));
}

TEST_CASE("request serialization is canonical across repeated calls") {
  auto a = providers::serialize_request(completion_model(), p1_rendered(),
                                        SamplingParams::point_prediction());
  auto b = providers::serialize_request(completion_model(), p1_rendered(),
                                        SamplingParams::point_prediction());
  CHECK(a == b);
}

TEST_CASE("chat prompt against a completion endpoint is an ENDPOINT_MISMATCH") {
  TempDir dir("replay");
  ReplayStore replay(dir.path(), ReplayMode::PASSTHROUGH);
  CannedProvider canned;
  try {
    providers::complete(canned, completion_model(), p1_chat_rendered(),
                        SamplingParams::point_prediction(), replay);
    FAIL("expected ENDPOINT_MISMATCH");
  } catch (const Error& ex) {
    CHECK(ex.code() == ErrorCode::ENDPOINT_MISMATCH);
  }
}

TEST_CASE("record then replay returns byte-identical samples with no upstream call") {
  TempDir dir("replay");
  CannedProvider canned;
  SamplingParams params = SamplingParams::confidence_profile();

  ReplayStore recorder(dir.path(), ReplayMode::RECORD);
  auto recorded =
      providers::complete(canned, completion_model(), p1_rendered(), params, recorder);
  REQUIRE(recorded.size() == 20);

  ReplayStore replayer(dir.path(), ReplayMode::REPLAY);
  testsupport::CountingProvider poison(nullptr, /*poison=*/true);
  auto replayed = providers::complete(poison, completion_model(), p1_rendered(),
                                      params, replayer);
  CHECK(poison.calls() == 0);
  REQUIRE(replayed.size() == 20);
  for (int i = 0; i < 20; ++i) {
    CHECK(replayed[i].sample_index == recorded[i].sample_index);
    CHECK(replayed[i].raw_text == recorded[i].raw_text);
    CHECK(replayed[i].latency_ms == recorded[i].latency_ms);
    CHECK(replayed[i].usage.prompt_tokens == recorded[i].usage.prompt_tokens);
  }
}

TEST_CASE("replay mode misses are an error, never a network call") {
  TempDir dir("replay-miss");
  std::filesystem::create_directories(dir.path());
  ReplayStore replayer(dir.path(), ReplayMode::REPLAY);
  testsupport::CountingProvider poison(nullptr, /*poison=*/true);
  try {
    providers::complete(poison, completion_model(), p1_rendered(),
                        SamplingParams::point_prediction(), replayer);
    FAIL("expected REPLAY_MISS");
  } catch (const Error& ex) {
    CHECK(ex.code() == ErrorCode::REPLAY_MISS);
    CHECK(poison.calls() == 0);
  }
}

TEST_CASE("record mode only fetches missing sample indices") {
  TempDir dir("replay-partial");
  CannedProvider canned;
  SamplingParams params = SamplingParams::confidence_profile();
  ReplayStore recorder(dir.path(), ReplayMode::RECORD);

  testsupport::CountingProvider counting_first(&canned);
  providers::complete_indices(counting_first, completion_model(), p1_rendered(),
                              params, recorder, {0, 1, 2, 3, 4});
  CHECK(counting_first.samples_fetched() == 5);

  testsupport::CountingProvider counting_second(&canned);
  auto full = providers::complete(counting_second, completion_model(), p1_rendered(),
                                  params, recorder);
  CHECK(counting_second.samples_fetched() == 15);  // 5 already recorded
  CHECK(full.size() == 20);
}

TEST_CASE("replay writes are idempotent per key") {
  TempDir dir("replay-idem");
  ReplayStore store(dir.path(), ReplayMode::RECORD);
  auto key = ReplayStore::key(completion_model(), p1_rendered(),
                              SamplingParams::point_prediction(), 0);
  providers::SampleResponse first;
  first.sample_index = 0;
  first.raw_text = "toxic";
  store.store(key, completion_model(), p1_rendered(),
              SamplingParams::point_prediction(), first);

  providers::SampleResponse second = first;
  second.raw_text = "non-toxic";  // must not overwrite the persisted sample
  store.store(key, completion_model(), p1_rendered(),
              SamplingParams::point_prediction(), second);

  auto loaded = store.lookup(key);
  REQUIRE(loaded.has_value());
  CHECK(loaded->raw_text == "toxic");
}

TEST_CASE("replay keys separate sample indices and sampling params") {
  auto base = ReplayStore::key(completion_model(), p1_rendered(),
                               SamplingParams::point_prediction(), 0);
  auto other_index = ReplayStore::key(completion_model(), p1_rendered(),
                                      SamplingParams::point_prediction(), 1);
  auto other_params = ReplayStore::key(completion_model(), p1_rendered(),
                                       SamplingParams::confidence_profile(), 0);
  CHECK(base != other_index);
  CHECK(base != other_params);
}

TEST_CASE("http provider round-trips against a local stub") {
  StubServer stub([](const httplib::Request& req, httplib::Response& res, int) {
    auto body = json::parse(req.body);
    respond_choices(res, body.at("n").get<int>(), "toxic");
  });
  providers::HttpProviderOptions options;
  options.base_url = stub.base_url();
  options.api_key = "test-key";
  providers::HttpProvider provider(options);

  auto samples = provider.fetch(completion_model(), p1_rendered(),
                                SamplingParams::point_prediction(), {0});
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].raw_text == "toxic");
  CHECK(samples[0].finish_reason == "stop");
  CHECK(samples[0].usage.prompt_tokens == 9);
}

TEST_CASE("rate limits are retried with backoff until the budget runs out") {
  StubServer stub([](const httplib::Request& req, httplib::Response& res, int count) {
    if (count <= 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    auto body = json::parse(req.body);
    respond_choices(res, body.at("n").get<int>(), "non-toxic");
  });

  int sleeps = 0;
  providers::HttpProviderOptions options;
  options.base_url = stub.base_url();
  options.sleep_fn = [&sleeps](std::chrono::milliseconds) { ++sleeps; };
  providers::HttpProvider provider(options);

  auto samples = provider.fetch(completion_model(), p1_rendered(),
                                SamplingParams::point_prediction(), {0});
  CHECK(samples[0].raw_text == "non-toxic");
  CHECK(sleeps == 2);
  CHECK(stub.requests.load() == 3);
}

TEST_CASE("exhausted retry budget surfaces RATE_LIMITED") {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    res.status = 429;
    res.set_content("always busy", "text/plain");
  });
  providers::HttpProviderOptions options;
  options.base_url = stub.base_url();
  options.max_attempts = 3;
  options.sleep_fn = [](std::chrono::milliseconds) {};
  providers::HttpProvider provider(options);
  try {
    provider.fetch(completion_model(), p1_rendered(),
                   SamplingParams::point_prediction(), {0});
    FAIL("expected RATE_LIMITED");
  } catch (const Error& ex) {
    CHECK(ex.code() == ErrorCode::RATE_LIMITED);
    CHECK(stub.requests.load() == 3);
  }
}

TEST_CASE("fewer choices than requested triggers follow-up requests") {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    respond_choices(res, 1, "toxic");  // always short
  });
  providers::HttpProviderOptions options;
  options.base_url = stub.base_url();
  providers::HttpProvider provider(options);

  SamplingParams params = SamplingParams::point_prediction();
  params.n_samples = 3;
  auto samples = provider.fetch(completion_model(), p1_rendered(), params, {0, 1, 2});
  CHECK(samples.size() == 3);
  CHECK(stub.requests.load() == 3);
  CHECK(samples[2].sample_index == 2);
}

TEST_CASE("http errors surface the status and body") {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    res.status = 400;
    res.set_content("{\"error\":{\"message\":\"bad model\"}}", "application/json");
  });
  providers::HttpProviderOptions options;
  options.base_url = stub.base_url();
  options.sleep_fn = [](std::chrono::milliseconds) {};
  providers::HttpProvider provider(options);
  try {
    provider.fetch(completion_model(), p1_rendered(),
                   SamplingParams::point_prediction(), {0});
    FAIL("expected HTTP_ERROR");
  } catch (const Error& ex) {
    CHECK(ex.code() == ErrorCode::HTTP_ERROR);
    CHECK(std::string(ex.what()).find("400") != std::string::npos);
  }
}
