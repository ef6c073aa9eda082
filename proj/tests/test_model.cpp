#include <gtest/gtest.h>

#include <string>

#include "fixtures.hpp"
#include "mobllm/model.hpp"
#include "mobllm/trainer.hpp"

using namespace mobllm;
using mobllm::testing::tiny_model;
using mobllm::testing::tiny_sequences;
using mobllm::testing::tiny_vocab;

namespace {

data::Vocabulary vocab5() { return tiny_vocab({{0}, {1, 2}, {2, 3, 4}, {5}, {0, 5}}, 6, 3); }

std::size_t trainable_with_prefix(const ParameterStore& store, std::string_view prefix) {
  std::size_t n = 0;
  for (const Parameter& p : store)
    if (p.trainable && p.name.starts_with(prefix)) n += static_cast<std::size_t>(p.size());
  return n;
}

EncodedSequence encode_all(const MobilityModel& m, ad::Tape& tape, const data::CheckinSequence& seq) {
  std::vector<int> pois;
  for (const auto& r : seq.records) pois.push_back(r.poi_id);
  return m.encode(m.embed_pois(tape, pois), seq.user_id, seq.records);
}

// Gradient of one example's loss, taken through the trainer.
GradBuffer loss_gradients(MobilityModel& m, const std::vector<data::CheckinSequence>& seqs) {
  Trainer t(m, seqs);
  const std::size_t idx[] = {0};
  const auto ex = make_examples(m.task(), seqs, idx);
  GradBuffer g;
  ad::Tape tape(&g);
  std::vector<int> pois;
  for (int k = 0; k < ex[0].prefix; ++k) pois.push_back(seqs[0].records[static_cast<std::size_t>(k)].poi_id);
  tape.backward(t.example_loss(m.embed_pois(tape, pois), ex[0], TpLoss::mae));
  return g;
}

bool has_nonzero(const GradBuffer& g, const Parameter& p) {
  const Matrix* m = g.find(p);
  return m != nullptr && m->cwiseAbs().maxCoeff() > 0.0;
}

}  // namespace

TEST(Ablation, FlagsParse) {
  Ablation a;
  a.set("no_htpp");
  a.set("no_llm");
  EXPECT_EQ(a.names(), (std::vector<std::string>{"no_htpp", "no_llm"}));
  EXPECT_THROW(a.set("no_heads"), ArgumentError);
}

TEST(Model, TokenCountsPerTaskAndAblation) {
  const auto v = vocab5();
  const auto seqs = tiny_sequences(5, 3, 1, 2, 6);
  for (Task task : {Task::lp, Task::tul, Task::tp}) {
    for (bool no_htpp : {false, true}) {
      auto cfg = tiny_model(task);
      cfg.htpp.k = 3;
      cfg.ablation.no_htpp = no_htpp;
      MobilityModel m(v, cfg);
      ad::Tape tape;
      const auto e = encode_all(m, tape, seqs[0]);
      const Eigen::Index user_rows = task == Task::tul ? 0 : 1;
      const Eigen::Index prompt_rows = no_htpp ? 0 : 9;
      EXPECT_EQ(e.input.tokens.rows(), 6 + user_rows + prompt_rows);
      EXPECT_EQ(e.input.has_user, task != Task::tul);
      EXPECT_EQ(e.out.alpha.rows(), 6);
      EXPECT_EQ(e.selection.has_value(), !no_htpp);
    }
  }
}

TEST(Model, TulIgnoresTheUserTable) {
  const auto v = vocab5();
  auto seqs = tiny_sequences(5, 3, 1, 3, 5);
  MobilityModel m(v, tiny_model(Task::tul));
  EXPECT_FALSE(m.user_table().trainable);
  ad::Tape tape;
  const RowVector base = m.logits(encode_all(m, tape, seqs[0])).value();
  m.user_table().value.setConstant(7.0);
  seqs[0].user_id = 2;
  const RowVector other = m.logits(encode_all(m, tape, seqs[0])).value();
  EXPECT_EQ(base, other);
  EXPECT_FALSE(has_nonzero(loss_gradients(m, seqs), m.user_table()));
}

TEST(Model, LpUsesTheUserToken) {
  const auto v = vocab5();
  auto seqs = tiny_sequences(5, 3, 1, 3, 5);
  MobilityModel m(v, tiny_model(Task::lp));
  EXPECT_TRUE(m.user_table().trainable);
  EXPECT_TRUE(has_nonzero(loss_gradients(m, seqs), m.user_table()));
}

// Changing the time of record j leaves every alpha row before j untouched.
TEST(Model, AlphaIsCausal) {
  const auto v = vocab5();
  for (Task task : {Task::lp, Task::tul, Task::tp}) {
    MobilityModel m(v, tiny_model(task));
    const auto seqs = tiny_sequences(5, 3, 4, 11, 7);
    for (const auto& seq : seqs) {
      for (std::size_t j = 1; j < seq.records.size(); ++j) {
        auto moved = seq;
        moved.records[j].timestamp += 5000;
        moved.records[j].delta_t += 5000;
        ad::Tape tape;
        const Matrix a = encode_all(m, tape, seq).out.alpha.value();
        const Matrix b = encode_all(m, tape, moved).out.alpha.value();
        const auto rows = static_cast<Eigen::Index>(j);
        EXPECT_EQ(a.topRows(rows), b.topRows(rows)) << "task " << task_name(task) << " j " << j;
        EXPECT_NE(a.row(rows), b.row(rows));
      }
    }
  }
}

// Parameter census: each flag moves the trainable count by the size of the
// tensors it freezes or adds.
TEST(Ablation, TrainableCountCensus) {
  const auto v = vocab5();
  for (Task task : {Task::lp, Task::tul, Task::tp}) {
    const auto cfg = tiny_model(task);
    MobilityModel full(v, cfg);
    const std::size_t base = full.trainable_count();
    const std::size_t w = static_cast<std::size_t>(cfg.vimn.hidden);
    const std::size_t d = static_cast<std::size_t>(cfg.ppel.d);
    const std::size_t time = 2 * cfg.vimn.time.periods.size();

    auto flagged = [&](const char* flag) {
      auto c = cfg;
      c.ablation.set(flag);
      MobilityModel m(v, c);
      return m.trainable_count();
    };
    // Prompt values are frozen by default, so only the key matrices go.
    EXPECT_EQ(flagged("no_htpp"), base - 3 * w * w);
    // VIMN goes, one fully connected layer comes in.
    EXPECT_EQ(flagged("no_vimn"), base - trainable_with_prefix(full.store(), "vimn.") + (d + time + 1) * w + w);
    Ppel& ppel = full.ppel();
    std::size_t semantic = 0;
    for (const Parameter* p : {&ppel.e_cat_id(), &ppel.w_q(), &ppel.w_k(), &ppel.w_v(), &ppel.geo().parameter()})
      semantic += static_cast<std::size_t>(p->size());
    EXPECT_EQ(flagged("no_ppel"), base - semantic);
    EXPECT_EQ(flagged("no_llm"), base);
  }
}

TEST(Ablation, NoPpelDisconnectsGeoAndCategories) {
  const auto v = vocab5();
  const auto seqs = tiny_sequences(5, 3, 1, 5, 6);
  for (bool no_ppel : {false, true}) {
    auto cfg = tiny_model(Task::lp);
    cfg.ablation.no_ppel = no_ppel;
    MobilityModel m(v, cfg);
    const auto g = loss_gradients(m, seqs);
    Ppel& p = m.ppel();
    for (const Parameter* t : {&p.e_cat_id(), &p.w_k(), &p.w_v(), &p.geo().parameter()})
      EXPECT_EQ(has_nonzero(g, *t), !no_ppel) << t->name;
    EXPECT_TRUE(has_nonzero(g, p.e_poi()));
  }
}

TEST(Ablation, NoVimnUsesTheFullyConnectedPath) {
  const auto v = vocab5();
  const auto seqs = tiny_sequences(5, 3, 1, 6, 6);
  for (bool no_vimn : {false, true}) {
    auto cfg = tiny_model(Task::tp);
    cfg.ablation.no_vimn = no_vimn;
    MobilityModel m(v, cfg);
    const auto g = loss_gradients(m, seqs);
    EXPECT_EQ(has_nonzero(g, *m.fc().weight), no_vimn);
    EXPECT_EQ(m.fc().weight->trainable, no_vimn);
    for (const Parameter* t : m.vimn().parameters()) EXPECT_EQ(t->trainable, !no_vimn) << t->name;
  }
}

TEST(Ablation, NoVimnRowsAreIndependent) {
  const auto v = vocab5();
  auto cfg = tiny_model(Task::lp);
  cfg.ablation.no_vimn = true;
  cfg.ablation.no_htpp = true;
  MobilityModel m(v, cfg);
  auto seqs = tiny_sequences(5, 3, 1, 8, 5);
  ad::Tape tape;
  const Matrix h = encode_all(m, tape, seqs[0]).h.value();
  seqs[0].records[1].timestamp += 777;
  const Matrix h2 = encode_all(m, tape, seqs[0]).h.value();
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    if (i == 1) EXPECT_NE(h.row(i), h2.row(i));
    else EXPECT_EQ(h.row(i), h2.row(i));
  }
}

TEST(Model, ReappliedAblationRestoresTrainability) {
  const auto v = vocab5();
  MobilityModel m(v, tiny_model(Task::lp));
  const std::size_t base = m.trainable_count();
  Ablation a;
  a.set("no_vimn");
  a.set("no_htpp");
  m.apply_ablation(a);
  EXPECT_LT(m.trainable_count(), base);
  m.apply_ablation({});
  EXPECT_EQ(m.trainable_count(), base);
}

TEST(Model, Errors) {
  EXPECT_THROW(MobilityModel(data::Vocabulary{}, tiny_model(Task::lp)), DataError);
  const auto v = vocab5();
  MobilityModel lp(v, tiny_model(Task::lp));
  ad::Tape tape;
  const int few[] = {0};
  const auto emb = lp.embed_pois(tape, few);
  const data::CheckinRecord rec[] = {{3, 1262304000, 0}};
  EXPECT_THROW(lp.encode(emb, 0, rec), LookupError);
  EXPECT_THROW(lp.encode(emb, 0, std::span<const data::CheckinRecord>{}), ArgumentError);
  const data::CheckinRecord ok[] = {{0, 1262304000, 0}};
  EXPECT_THROW(lp.mixture(lp.encode(emb, 0, ok)), ArgumentError);
  auto cfg = tiny_model(Task::lp);
  cfg.ablation.no_htpp = true;
  MobilityModel bare(v, cfg);
  // TUL without prompts has no beta rows and pools alpha alone.
  auto tul_cfg = cfg;
  tul_cfg.task = Task::tul;
  MobilityModel tul(v, tul_cfg);
  EXPECT_NO_THROW(tul.logits(tul.encode(tul.embed_pois(tape, few), 0, ok)));
  EXPECT_NO_THROW(bare.logits(bare.encode(bare.embed_pois(tape, few), 0, ok)));
}
