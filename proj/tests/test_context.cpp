#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "lexpol/context.hpp"
#include "lexpol/errors.hpp"

using namespace lexpol;
namespace fs = std::filesystem;

TEST_CASE("hashed embedding is pure in (text, n, seed)") {
  TaskMetadata meta{"t0", "go left"};
  ContextEmbedding a = embed_hashed(meta, 16, 77);
  ContextEmbedding b = embed_hashed(meta, 16, 77);
  REQUIRE(a.vector.size() == 16);
  CHECK((a.vector.array() == b.vector.array()).all());
  CHECK(a.provider_tag == ProviderTag::kHashed);
  CHECK_FALSE(a.head_applied);

  ContextEmbedding other_seed = embed_hashed(meta, 16, 78);
  CHECK_FALSE((a.vector.array() == other_seed.vector.array()).all());
}

TEST_CASE("distinct instructions embed to distinct directions") {
  VectorXd l = embed_hashed({"t0", "go left"}, 32, 7).vector;
  VectorXd r = embed_hashed({"t1", "go right"}, 32, 7).vector;
  double cosine = l.dot(r) / (l.norm() * r.norm());
  CHECK(cosine < 0.99);
}

TEST_CASE("bag of words ignores token order") {
  VectorXd a = embed_hashed({"t0", "go left"}, 24, 5).vector;
  VectorXd b = embed_hashed({"t1", "left go"}, 24, 5).vector;
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("tokenizer lowercases and splits on non-alphanumerics") {
  auto toks = tokenize_lower("Go to the RED goal, then... the blue-goal!");
  std::vector<std::string> want = {"go",   "to",  "the",  "red",  "goal",
                                   "then", "the", "blue", "goal"};
  CHECK(toks == want);
  CHECK(tokenize_lower("").empty());
}

TEST_CASE("embedding table lookup and error path") {
  EmbeddingTable t;
  VectorXd v(2);
  v << 1.0, 0.0;
  t.insert("t1", v);
  CHECK(t.has("t1"));
  CHECK(t.at("t1")(0) == 1.0);
  CHECK(t.at("t1")(1) == 0.0);
  CHECK_FALSE(t.has("t9"));
  CHECK_THROWS_AS(embed_table({"t9", "whatever"}, t), ConfigError);
}

TEST_CASE("table csv round-trips bit-exactly") {
  fs::path p = fs::temp_directory_path() / "lexpol_test_table.csv";
  EmbeddingTable t;
  VectorXd a(3), b(3);
  a << 0.1, -2.5e-7, 3.14159265358979;
  b << 1.0 / 3.0, -0.0, 1e300;
  t.insert("alpha", a);
  t.insert("beta", b);
  t.save_csv(p);

  EmbeddingTable back = EmbeddingTable::load_csv(p);
  REQUIRE(back.size() == 2);
  REQUIRE(back.dim() == 3);
  CHECK((back.at("alpha").array() == a.array()).all());
  CHECK((back.at("beta").array() == b.array()).all());

  CHECK_THROWS_AS(EmbeddingTable::load_csv(p.string() + ".missing"), IoError);
  fs::remove(p);
}

TEST_CASE("provider front end agrees with the underlying embedders") {
  ContextProvider hp = ContextProvider::hashed(12, 99);
  CHECK(hp.dim() == 12);
  CHECK(hp.tag() == ProviderTag::kHashed);
  TaskMetadata meta{"t0", "go to the red goal"};
  CHECK((hp.embed(meta).vector.array() ==
         embed_hashed(meta, 12, 99).vector.array())
            .all());

  EmbeddingTable t;
  VectorXd v(2);
  v << 4.0, 5.0;
  t.insert("t0", v);
  ContextProvider tp = ContextProvider::table(t);
  CHECK(tp.dim() == 2);
  CHECK(tp.embed(meta).vector(1) == 5.0);
}

TEST_CASE("identity head with stopgrad passes through and never learns") {
  ContextHead head(DenseNet::identity(4), /*stopgrad=*/true);
  MatrixXd z = MatrixXd::Random(4, 3);
  MatrixXd out = head.apply_cols(z);
  CHECK((out.array() == z.array()).all());

  MatrixXd up = MatrixXd::Ones(4, 3);
  MatrixXd back = head.backward(up);
  CHECK(back.isZero(0.0));  // stopgrad blocks the raw gradient too
  for (const auto& g : head.net().grads().dW) CHECK(g.isZero(0.0));
}

TEST_CASE("without stopgrad the head accumulates a nonzero gradient") {
  Rng rng = make_stream(31, "ctx-test");
  ContextHead head = ContextHead::make_default(6, 5, rng, /*stopgrad=*/false);
  MatrixXd z = MatrixXd::Random(6, 4);
  head.apply_cols(z);
  MatrixXd up = MatrixXd::Ones(5, 4);
  head.backward(up);
  double total = 0.0;
  for (const auto& g : head.net().grads().dW) total += g.cwiseAbs().sum();
  CHECK(total > 0.0);
}

TEST_CASE("default head honors the configured output width") {
  Rng r1 = make_stream(32, "ctx-test");
  ContextHead wide = ContextHead::make_default(7, 50, r1, true);
  CHECK(wide.out_dim() == 50);
  CHECK(wide.net().input_dim() == 7);

  Rng r2 = make_stream(33, "ctx-test");
  ContextHead narrow = ContextHead::make_default(300, 50, r2, true);
  CHECK(narrow.out_dim() == 50);
  MatrixXd z = MatrixXd::Random(300, 2);
  CHECK(narrow.apply_cols(z).rows() == 50);
}
