#include <gtest/gtest.h>

#include <map>
#include <mutex>
#include <random>

#include "oracles.hpp"
#include "tcd/dataset.hpp"
#include "tcd/decoder.hpp"
#include "tcd/scripted_backend.hpp"

using namespace tcd;

namespace {

/// Forwards to another backend and keeps every context it was asked about.
class RecordingBackend final : public Backend {
 public:
  explicit RecordingBackend(const Backend& inner) : inner_(inner) {}
  const Vocabulary& vocab() const override { return inner_.vocab(); }
  std::string kind() const override { return "recording"; }
  LogitVector next_logits(const MultimodalContext& ctx) const override {
    {
      std::lock_guard lock(m_);
      calls.push_back(ctx);
    }
    return inner_.next_logits(ctx);
  }
  mutable std::vector<MultimodalContext> calls;

 private:
  const Backend& inner_;
  mutable std::mutex m_;
};

/// Returns one row for the full context, another for any shorter sequence.
class TwoRowBackend final : public Backend {
 public:
  TwoRowBackend(Vocabulary v, std::size_t full, std::function<LogitVector(bool, const TokenList&)> f)
      : v_(std::move(v)), full_(full), f_(std::move(f)) {}
  const Vocabulary& vocab() const override { return v_; }
  std::string kind() const override { return "two_row"; }
  LogitVector next_logits(const MultimodalContext& ctx) const override {
    return f_(ctx.frames.size() == full_, ctx.prefix);
  }

 private:
  Vocabulary v_;
  std::size_t full_;
  std::function<LogitVector(bool, const TokenList&)> f_;
};

FrameSequence ref_video(const std::string& id, std::size_t n) {
  FrameSequence s;
  s.source_id = id;
  for (std::size_t i = 0; i < n; ++i) s.frames.push_back(Frame{i, FileRef{"f"}});
  return s;
}

struct FixtureQuestion {
  FrameSequence video;
  TokenList instruction;
};

std::vector<FixtureQuestion> fixture_questions() {
  const auto m = load_manifest(std::filesystem::path(TCD_FIXTURE_DIR) / "three_items" / "manifest.json");
  std::vector<FixtureQuestion> out;
  for (const auto& item : m.items) {
    const auto video = load_video(m, item);
    for (const auto& q : item.questions) out.push_back({video, split_words(q.text)});
  }
  return out;
}

const ScriptedBackend& fixture_backend() {
  static const auto b = ScriptedBackend::load(std::filesystem::path(TCD_FIXTURE_DIR) / "three_items" / "scenario.json");
  return b;
}

DecodeRequest request_for(const FixtureQuestion& q, std::optional<ContrastParams> contrast) {
  DecodeRequest r;
  r.instruction = q.instruction;
  r.frames = q.video;
  r.max_tokens = 3;
  if (contrast) {
    r.counterpart = CounterpartSpec{16, 4};
    r.params = *contrast;
  }
  return r;
}

}  // namespace

TEST(Decoder, BothContextsShareInstructionAndPrefixEveryStep) {
  const auto qs = fixture_questions();
  RecordingBackend rec(fixture_backend());
  const auto result = decode_tcd(request_for(qs[1], ContrastParams{0.5, 0.5}), rec);
  ASSERT_EQ(rec.calls.size() % 2, 0u);
  const auto counterpart_frames = rec.calls[1].frames;
  EXPECT_EQ(counterpart_frames.indices(), (std::vector<std::size_t>{2, 6, 10, 14}));
  for (std::size_t i = 0; i < rec.calls.size(); i += 2) {
    const auto& ori = rec.calls[i];
    const auto& con = rec.calls[i + 1];
    EXPECT_EQ(ori.frames, qs[1].video);
    EXPECT_EQ(con.frames, counterpart_frames) << "counterpart must be built once per request";
    EXPECT_EQ(ori.instruction, con.instruction);
    EXPECT_EQ(ori.prefix, con.prefix);
    EXPECT_EQ(ori.prefix, TokenList(result.tokens.begin(), result.tokens.begin() + static_cast<long>(i / 2)));
  }
  EXPECT_EQ(rec.calls.size(), 2 * result.tokens.size() + (result.stop_step ? 2 : 0));
}

TEST(Decoder, FixtureAnswers) {
  const auto qs = fixture_questions();
  const std::vector<std::string> standard{"no", "the dog runs", "yes", "the dog sits", "yes"};
  const std::vector<std::string> tcd{"yes", "the dog falls", "no", "the dog runs", "no"};
  ASSERT_EQ(qs.size(), standard.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(decode_standard(request_for(qs[i], std::nullopt), fixture_backend()).text(), standard[i]) << i;
    EXPECT_EQ(decode_tcd(request_for(qs[i], ContrastParams{0.5, 0.5}), fixture_backend()).text(), tcd[i]) << i;
  }
}

TEST(Decoder, AlphaZeroBetaZeroReducesToStandard) {
  for (const auto& q : fixture_questions()) {
    const auto s = decode_standard(request_for(q, std::nullopt), fixture_backend());
    const auto t = decode_tcd(request_for(q, ContrastParams{0.0, 0.0}), fixture_backend());
    EXPECT_EQ(t.tokens, s.tokens);
    EXPECT_EQ(t.stop_reason, s.stop_reason);
    for (const auto& d : t.steps) EXPECT_FALSE(d.contrast_flipped);
  }
}

TEST(Decoder, BetaOneIgnoresCounterpartContent) {
  const auto qs = fixture_questions();
  for (double alpha : {0.5, 1.0, 5.0}) {
    for (const auto& q : qs) {
      const auto s = decode_standard(request_for(q, std::nullopt), fixture_backend());
      EXPECT_EQ(decode_tcd(request_for(q, ContrastParams{alpha, 1.0}), fixture_backend()).tokens, s.tokens);
    }
  }
  // Counterpart rows that disagree wildly change nothing at beta = 1.
  const Vocabulary v({"yes", "no", "a", "<eos>"});
  for (int flip = 0; flip < 2; ++flip) {
    TwoRowBackend b(v, 8, [&](bool full, const TokenList& p) {
      if (p.size() >= 2) return LogitVector{0, 0, 0, 5};
      if (full) return LogitVector{1.0, 0.9, 0.2, -1};
      return flip ? LogitVector{-50, 50, 0, 0} : LogitVector{50, -50, 10, 0};
    });
    DecodeRequest r;
    r.instruction = {"q"};
    r.frames = ref_video("v", 8);
    r.counterpart = CounterpartSpec{8, 2};
    r.params = {3.0, 1.0};
    EXPECT_EQ(decode_tcd(r, b).tokens, (TokenList{"yes", "yes"}));
  }
}

TEST(Decoder, StopTokenExcludedAndDiagnosticsKept) {
  const auto qs = fixture_questions();
  const auto r = decode_tcd(request_for(qs[0], ContrastParams{0.5, 0.5}), fixture_backend());
  EXPECT_EQ(r.tokens, TokenList{"yes"});
  EXPECT_EQ(r.steps.size(), 1u);
  EXPECT_TRUE(r.steps[0].contrast_flipped);
  EXPECT_EQ(r.stop_reason, StopReason::stop_token);
  EXPECT_EQ(r.stop_token, "<eos>");
  ASSERT_TRUE(r.stop_step.has_value());
  EXPECT_EQ(fixture_backend().vocab().token(r.stop_step->argmax_final), "<eos>");

  const auto open = decode_tcd(request_for(qs[1], ContrastParams{0.5, 0.5}), fixture_backend());
  EXPECT_EQ(open.stop_reason, StopReason::max_tokens);
  EXPECT_FALSE(open.stop_step.has_value());
  EXPECT_EQ(open.tokens.size(), 3u);
}

TEST(Decoder, CustomStopTokenAndImmediateStop) {
  const Vocabulary v({"yes", "no", ".", "<eos>"});
  TwoRowBackend b(v, 4, [](bool, const TokenList& p) {
    return p.empty() ? LogitVector{1, 0, 0, 0} : LogitVector{0, 0, 3, 0};
  });
  DecodeRequest r;
  r.instruction = {"q"};
  r.frames = ref_video("v", 4);
  r.stop_tokens = {"."};
  const auto res = decode_standard(r, b);
  EXPECT_EQ(res.tokens, TokenList{"yes"});
  EXPECT_EQ(res.stop_token, ".");

  TwoRowBackend eos_first(v, 4, [](bool, const TokenList&) { return LogitVector{0, 0, 0, 1}; });
  const auto empty = decode_standard(r, eos_first);
  EXPECT_TRUE(empty.tokens.empty());
  EXPECT_EQ(empty.text(), "");
  EXPECT_EQ(empty.stop_reason, StopReason::stop_token);
}

TEST(Decoder, RequestContracts) {
  const auto qs = fixture_questions();
  auto r = request_for(qs[0], ContrastParams{0.5, 0.5});
  r.max_tokens = 0;
  EXPECT_THROW(decode(r, fixture_backend()), ContractViolation);
  r = request_for(qs[0], ContrastParams{-1, 0.5});
  EXPECT_THROW(decode(r, fixture_backend()), ContractViolation);
  r = request_for(qs[0], ContrastParams{0.5, 0.5});
  r.stop_tokens = {"nope"};
  EXPECT_THROW(decode(r, fixture_backend()), ContractViolation);
  r = request_for(qs[0], ContrastParams{0.5, 0.5});
  r.counterpart->counterpart_frame_count = 17;
  EXPECT_THROW(decode(r, fixture_backend()), ContractViolation);
  auto s = request_for(qs[0], std::nullopt);
  EXPECT_THROW(decode_tcd(s, fixture_backend()), ContractViolation);
}

TEST(Decoder, BackendErrorsCarrySideAndStep) {
  const auto qs = fixture_questions();
  auto r = request_for(qs[0], ContrastParams{0.5, 0.5});
  r.counterpart->counterpart_frame_count = 3;  // no scripted rows for this counterpart
  try {
    decode(r, fixture_backend());
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.side(), QuerySide::counterpart);
    EXPECT_EQ(e.step(), 0u);
    EXPECT_NE(std::string(e.what()).find("unmatched_signature"), std::string::npos);
  }
  r = request_for(qs[0], std::nullopt);
  r.instruction = {"other", "question"};
  try {
    decode(r, fixture_backend());
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.side(), QuerySide::original);
  }
}

TEST(Decoder, WrongLengthLogitsAreRejected) {
  const Vocabulary v({"yes", "no", "<eos>"});
  TwoRowBackend b(v, 2, [](bool, const TokenList&) { return LogitVector{1, 2}; });
  DecodeRequest r;
  r.frames = ref_video("v", 2);
  EXPECT_THROW(decode_standard(r, b), DecodeError);
}

TEST(Decoder, ConcurrentQueriesGiveTheSameResult) {
  for (const auto& q : fixture_questions()) {
    auto r = request_for(q, ContrastParams{0.5, 0.5});
    const auto seq = decode_tcd(r, fixture_backend());
    r.concurrent_queries = true;
    const auto par = decode_tcd(r, fixture_backend());
    EXPECT_EQ(par.tokens, seq.tokens);
    EXPECT_EQ(par.stop_reason, seq.stop_reason);
  }
}

TEST(Decoder, MatchesExhaustiveOracleOnRandomTables) {
  const TokenList vocab{"yes", "no", "a", "<eos>"};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::uniform_real_distribution<double> ua(0.0, 2.0), ub(0.0, 1.0);
  const ContextSignature ori_sig{"v", {0, 1, 2, 3, 4, 5}, {"q"}};
  const ContextSignature con_sig{"v", {1, 4}, {"q"}};
  for (int trial = 0; trial < 150; ++trial) {
    ScriptedBackend b{Vocabulary(vocab)};
    std::map<TokenList, std::pair<std::vector<double>, std::vector<double>>> table;
    std::vector<TokenList> prefixes{{}};
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      if (prefixes[i].size() >= 2) continue;
      for (const auto& t : vocab) {
        if (t == "<eos>") continue;
        auto p = prefixes[i];
        p.push_back(t);
        prefixes.push_back(p);
      }
    }
    for (const auto& p : prefixes) {
      std::vector<double> o(4), c(4);
      for (auto& x : o) x = d(rng);
      for (auto& x : c) x = d(rng);
      table[p] = {o, c};
      b.add(ori_sig, p, LogitVector(o));
      b.add(con_sig, p, LogitVector(c));
    }
    const double alpha = ua(rng), beta = ub(rng);
    const auto answers = oracle::exhaustive_decode(
        vocab, {"<eos>"}, 3, alpha, beta,
        [&](const TokenList& p) -> std::optional<std::pair<std::vector<double>, std::vector<double>>> {
          auto it = table.find(p);
          if (it == table.end()) return std::nullopt;
          return it->second;
        });
    ASSERT_EQ(answers.size(), 1u) << "oracle must find exactly one self-consistent answer";

    DecodeRequest r;
    r.instruction = {"q"};
    r.frames = ref_video("v", 6);
    r.counterpart = CounterpartSpec{6, 2};
    r.params = {alpha, beta};
    r.max_tokens = 3;
    const auto got = decode_tcd(r, b);
    EXPECT_EQ(got.tokens, answers[0].tokens) << "trial " << trial;
    EXPECT_EQ(got.stop_reason == StopReason::stop_token, answers[0].stopped) << "trial " << trial;
  }
}
