#include <atomic>
#include <cmath>
#include <memory>
#include <string>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "seqx/backend.hpp"
#include "seqx/error.hpp"
#include "seqx/http_transport.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/protocol.hpp"
#include "seqx/random.hpp"

namespace seqx {
namespace {

BackendClient mock_client(const std::string& name, const std::string& endpoint,
                          BackendKind kind = BackendKind::kCausalLm, std::size_t max_len = 1024) {
  BackendSpec spec;
  spec.name = name;
  spec.endpoint = endpoint;
  spec.kind = kind;
  spec.max_sequence_length = max_len;
  spec.category = default_category(name);
  return BackendClient(spec, make_transport(spec));
}

TEST(Backend, TableMockTokenizesWords) {
  auto client = mock_client("gpt2", "mock://table");
  const auto r = client.fetch_logprobs("Hello world");
  ASSERT_EQ(r.tokens.size(), 2u);
  EXPECT_EQ(r.tokens[0].start, 0u);
  EXPECT_EQ(r.tokens[0].end, 5u);
  EXPECT_EQ(r.tokens[1].start, 6u);
  EXPECT_EQ(r.tokens[1].end, 11u);
  EXPECT_EQ(r.tokens[0].logprob, 0.0);
  EXPECT_LT(r.tokens[1].logprob, 0.0);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.text_hash, fnv1a("Hello world"));
}

TEST(Backend, UniformMockReportsLogVocab) {
  auto client = mock_client("u", "mock://uniform");
  const auto r = client.fetch_logprobs("one two three four");
  ASSERT_EQ(r.tokens.size(), 4u);
  for (std::size_t i = 1; i < r.tokens.size(); ++i) {
    EXPECT_NEAR(r.tokens[i].logprob, -10.825, 1e-3);
    EXPECT_DOUBLE_EQ(r.tokens[i].logprob, -std::log(50257.0));
  }
}

TEST(Backend, LogprobsAreDeterministic) {
  auto a = mock_client("g", "mock://synthetic?piece=2");
  auto b = mock_client("g", "mock://synthetic?piece=2");
  const std::string text = "Mibo tarsa lepo. Kavozi wexa.";
  EXPECT_EQ(a.fetch_logprobs(text), b.fetch_logprobs(text));
}

TEST(Backend, EmptyTextIsRejected) {
  auto client = mock_client("g", "mock://table");
  EXPECT_THROW(client.fetch_logprobs(""), InputError);
  EXPECT_THROW(client.fetch_logprobs("   "), InputError);
}

TEST(Backend, MaxSequenceLengthTruncates) {
  auto client = mock_client("g", "mock://table", BackendKind::kCausalLm, 3);
  const auto r = client.fetch_logprobs("a b c d e");
  EXPECT_EQ(r.tokens.size(), 3u);
  EXPECT_TRUE(r.truncated);
}

TEST(ValidateTokens, AcceptsFullCover) {
  const std::string text = "ab cd";
  std::vector<TokenLogProb> toks{{"ab", 0, 2, 0.0}, {" cd", 2, 5, -1.0}};
  EXPECT_FALSE(validate_tokens("b", text, toks));
}

TEST(ValidateTokens, ReportsPrefixCover) {
  const std::string text = "ab cd";
  std::vector<TokenLogProb> toks{{"ab", 0, 2, 0.0}};
  EXPECT_TRUE(validate_tokens("b", text, toks));
}

TEST(ValidateTokens, RejectsViolations) {
  const std::string text = "ab cd";
  auto bad = [&](std::vector<TokenLogProb> toks) {
    EXPECT_THROW(validate_tokens("b", text, toks), ProtocolError);
  };
  bad({{"", 1, 1, 0.0}});
  bad({{"ab cdx", 0, 6, 0.0}});
  bad({{"ab", 0, 2, 0.0}, {"b", 1, 2, -1.0}});
  bad({{"ab", 0, 2, std::nan("")}});
  bad({{"ab", 0, 2, 0.5}});
  bad({{"ab", 0, 2, 0.0}, {"d", 4, 5, -1.0}});
}

TEST(ValidateTokensFuzz, RandomCoversRoundTrip) {
  Rng rng(11);
  for (int iter = 0; iter < 300; ++iter) {
    std::string text;
    const auto words = 1 + rng.below(8);
    for (std::size_t w = 0; w < words; ++w) {
      if (w > 0) text += std::string(1 + rng.below(2), ' ');
      text += std::string(1 + rng.below(6), static_cast<char>('a' + rng.below(26)));
    }
    MockOptions opt;
    opt.mode = MockOptions::Mode::kSynthetic;
    opt.piece = rng.below(4);
    opt.attach_space = rng.below(2) == 1;
    MockBackend mock("fz", opt);
    const auto resp = mock.logprobs(text);
    EXPECT_FALSE(validate_tokens("fz", text, resp.tokens));
    const auto body = protocol::encode_logprobs_response(resp, text);
    const auto back = protocol::decode_logprobs_response("fz", body, text);
    EXPECT_EQ(back.tokens, resp.tokens);
  }
}

TEST(Protocol, CodepointOffsetsOnTheWire) {
  const std::string text = "caf\xc3\xa9 ok";
  const auto offsets = protocol::codepoint_offsets(text);
  ASSERT_EQ(offsets.size(), 8u);
  EXPECT_EQ(offsets[4], 5u);
  LogProbResponse r;
  r.backend = "m";
  r.tokens = {{"caf\xc3\xa9", 0, 5, 0.0}, {"ok", 6, 8, -1.0}};
  const auto body = protocol::encode_logprobs_response(r, text);
  EXPECT_EQ(body["tokens"][0]["end"].get<int>(), 4);
  EXPECT_EQ(body["tokens"][1]["start"].get<int>(), 5);
  EXPECT_EQ(body["tokens"][1]["end"].get<int>(), 7);
  const auto back = protocol::decode_logprobs_response("m", body, text);
  EXPECT_EQ(back.tokens, r.tokens);
}

TEST(Protocol, DecodeRejectsMalformedBodies) {
  const std::string text = "ab";
  using protocol::json;
  EXPECT_THROW(protocol::decode_logprobs_response("m", json{{"tokens", json::array()}}, text),
               ProtocolError);
  EXPECT_THROW(protocol::decode_logprobs_response("m", json{{"model", "m"}}, text), ProtocolError);
  json bad_logprob{{"model", "m"},
                   {"tokens", json::array({json{{"text", "ab"}, {"start", 0}, {"end", 2}}})}};
  EXPECT_THROW(protocol::decode_logprobs_response("m", bad_logprob, text), ProtocolError);
  json past_end{{"model", "m"},
                {"tokens", json::array({json{{"text", "ab"}, {"start", 0}, {"end", 9},
                                             {"logprob", 0.0}}})}};
  EXPECT_THROW(protocol::decode_logprobs_response("m", past_end, text), ProtocolError);
  EXPECT_THROW(protocol::parse_body("m", "{not json"), ProtocolError);
  EXPECT_THROW(protocol::decode_generate_response("m", json{{"x", 1}}), ProtocolError);
  EXPECT_THROW(protocol::decode_perturb_response("m", json{{"variants", 3}}), ProtocolError);
}

TEST(Generation, InstructionTunedBackendsWrapThePrompt) {
  auto chat = mock_client("chat", "mock://synthetic", BackendKind::kInstructionTuned);
  auto causal = mock_client("lm", "mock://synthetic", BackendKind::kCausalLm);
  EXPECT_EQ(chat.wire_prompt("Hi there."),
            std::string(kContinuationInstruction) + "Hi there.");
  EXPECT_EQ(causal.wire_prompt("Hi there."), "Hi there.");
}

TEST(Generation, EosAndLimits) {
  auto client = mock_client("lm", "mock://synthetic?eos=STOP");
  EXPECT_TRUE(client.generate("Please STOP now.", 20).end_of_sequence);
  const auto g = client.generate("Start here.", 20);
  EXPECT_FALSE(g.end_of_sequence);
  std::size_t words = 0;
  std::istringstream in(g.text);
  for (std::string w; in >> w;) ++words;
  EXPECT_LE(words, 20u);
  EXPECT_GT(words, 0u);
  EXPECT_THROW(client.generate("x", 0), InputError);
  EXPECT_THROW(client.generate(" ", 5), InputError);
}

TEST(Perturb, DeterministicAndCounted) {
  auto client = mock_client("lm", "mock://synthetic");
  const std::string text = "Mibo tarsa lepo dura sena.";
  const auto a = client.perturb(text, 5);
  const auto b = client.perturb(text, 5);
  ASSERT_EQ(a.variants.size(), 5u);
  EXPECT_EQ(a.variants, b.variants);
  EXPECT_THROW(client.perturb(text, 0), InputError);
}

TEST(Perturb, OneWordTextIsDegenerate) {
  auto client = mock_client("lm", "mock://synthetic");
  const auto p = client.perturb("Hello.", 1);
  ASSERT_EQ(p.variants.size(), 1u);
  EXPECT_EQ(p.variants[0], "Hello.");
  EXPECT_TRUE(p.degenerate[0]);
}

TEST(Perturb, IdentityPerturberIsAlwaysDegenerate) {
  auto client = mock_client("lm", "mock://synthetic?perturb=identity");
  const auto p = client.perturb("Mibo tarsa lepo.", 4);
  for (bool d : p.degenerate) EXPECT_TRUE(d);
}

TEST(Roster, ParsesSections) {
  const auto roster = parse_roster(
      "[gpt2]\nendpoint = mock://table\nkind = causal-lm\nmax_sequence_length = 512\n"
      "[chat-1]\nendpoint = mock://uniform\nkind = instruction-tuned\ncategory = CHAT\n");
  ASSERT_EQ(roster.size(), 2u);
  EXPECT_EQ(roster[0].name, "gpt2");
  EXPECT_EQ(roster[0].category, "GPT2");
  EXPECT_EQ(roster[0].max_sequence_length, 512u);
  EXPECT_EQ(roster[1].kind, BackendKind::kInstructionTuned);
  EXPECT_EQ(roster[1].category, "CHAT");
}

TEST(Roster, RejectsBadInput) {
  EXPECT_THROW(parse_roster(""), InputError);
  EXPECT_THROW(parse_roster("[a]\nendpoint = mock://table\n[a]\nendpoint = mock://table\n"),
               InputError);
  EXPECT_THROW(parse_roster("[a]\nkind = causal-lm\n"), InputError);
  EXPECT_THROW(parse_roster("[a]\nendpoint = mock://table\nkind = causal\n"), InputError);
  EXPECT_THROW(parse_roster("[a]\nendpoint = mock://table\nmax_sequence_length = 0\n"),
               InputError);
  EXPECT_THROW(load_roster("/nonexistent/roster.ini"), InputError);
}

TEST(Roster, DefaultCategory) {
  EXPECT_EQ(default_category("gpt-neo"), "GPTNEO");
  EXPECT_EQ(default_category("llama"), "LLAMA");
}

TEST(MockOptions, RejectsUnknownOptions) {
  EXPECT_THROW(MockOptions::parse("mock://nope"), InputError);
  EXPECT_THROW(MockOptions::parse("mock://table?bogus=1"), InputError);
  EXPECT_THROW(MockOptions::parse("mock://synthetic?rho=1"), InputError);
  EXPECT_THROW(MockOptions::parse("mock://synthetic?sigma=abc"), InputError);
}

TEST(Transport, DownMockIsATransportError) {
  auto client = mock_client("d", "mock://down");
  EXPECT_THROW(client.fetch_logprobs("hello"), TransportError);
}

TEST(Http, ServerRoundTripMatchesInProcessMock) {
  auto mock = std::make_shared<MockBackend>("srv", MockOptions::parse("mock://synthetic?piece=3"));
  ProtocolServer server("srv", mock);
  server.start();
  HttpTransport http("srv", server.endpoint());
  const std::string text = "Caf\xc3\xa9 mibo tarsa. Kavo wexa!";
  const auto over_wire = http.logprobs(text);
  const auto direct = mock->logprobs(text);
  EXPECT_EQ(over_wire.tokens, direct.tokens);
  EXPECT_EQ(http.perturb(text, 3), mock->perturb(text, 3));
  server.stop();
}

TEST(Http, InstructionWrapIsSentInTheRequestBody) {
  auto mock = std::make_shared<MockBackend>("chat", MockOptions::parse("mock://synthetic"));
  ProtocolServer server("chat", mock);
  server.start();
  BackendSpec spec;
  spec.name = "chat";
  spec.endpoint = server.endpoint();
  spec.kind = BackendKind::kInstructionTuned;
  BackendClient client(spec, make_transport(spec));
  client.generate("Once upon a time.", 10);
  const auto reqs = server.requests();
  ASSERT_FALSE(reqs.empty());
  const auto body = protocol::json::parse(reqs.back().body);
  EXPECT_EQ(reqs.back().path, "/generate");
  EXPECT_EQ(body["prompt"].get<std::string>(),
            std::string(kContinuationInstruction) + "Once upon a time.");
  EXPECT_TRUE(body["instruction_wrap"].get<bool>());
  server.stop();
}

TEST(Http, ServerErrorsAreRetriedTransportErrors) {
  httplib::Server srv;
  std::atomic<int> hits{0};
  srv.Post("/logprobs", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
    res.set_content("{\"error\":\"busy\"}", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  BackendSpec spec;
  spec.name = "busy";
  spec.endpoint = "http://127.0.0.1:" + std::to_string(port);
  BackendClient client(spec, make_transport(spec), 2);
  EXPECT_THROW(client.fetch_logprobs("hello"), TransportError);
  EXPECT_EQ(hits.load(), 3);
  srv.stop();
  t.join();
}

TEST(Http, ClientErrorsAreProtocolErrors) {
  httplib::Server srv;
  srv.Post("/logprobs", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("{}", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  HttpTransport http("bad", "http://127.0.0.1:" + std::to_string(port));
  EXPECT_THROW(http.logprobs("hello"), ProtocolError);
  srv.stop();
  t.join();
}

TEST(Http, UnreachableIsATransportError) {
  HttpTransport http("gone", "http://127.0.0.1:1", {}, 1);
  EXPECT_THROW(http.logprobs("hello"), TransportError);
}

}  // namespace
}  // namespace seqx
