#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "bsr/config.hpp"
#include "bsr/error.hpp"
#include "bsr/io.hpp"
#include "bsr/random.hpp"

using namespace bsr;
using nlohmann::json;

TEST_CASE("CSV parsing") {
  SUBCASE("plain table, last column is the target") {
    const auto d = dataset_from_csv(parse_csv("x0,y\n1,2\n3,4.5\n"));
    CHECK(d.size() == 2);
    CHECK(d.feature_names() == std::vector<std::string>{"x0"});
    CHECK(d.target()[1] == 4.5);
    CHECK(d.column(0)[1] == 3.0);
  }
  SUBCASE("BOM, CRLF and quoted header") {
    const auto t = parse_csv("\xEF\xBB\xBF\"a\",b,\"out\"\r\n1,2,3\r\n4,5,6\r\n");
    CHECK(t.header == std::vector<std::string>{"a", "b", "out"});
    const auto d = dataset_from_csv(t, std::string("a"));
    CHECK(d.feature_names() == std::vector<std::string>{"b", "out"});
    CHECK(d.target()[1] == 4.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_csv(""), ValidationError);
    CHECK_THROWS_AS(parse_csv("x0,y\n"), ValidationError);
    CHECK_THROWS_AS(parse_csv("x0,y\n1,abc\n"), ValidationError);
    CHECK_THROWS_AS(parse_csv("x0,y\n1,2,3\n"), ValidationError);
    CHECK_THROWS_AS(parse_csv("x0,y\n1,2\n1\n"), ValidationError);
    CHECK_THROWS_AS(dataset_from_csv(parse_csv("y\n1\n")), ValidationError);
    CHECK_THROWS_AS(dataset_from_csv(parse_csv("x0,y\n1,2\n"), std::string("z")), ValidationError);
    CHECK_THROWS_AS(read_csv("/nonexistent/data.csv"), IoError);
  }
  SUBCASE("write then read gives the same numbers") {
    const auto d = Dataset::from_xy({0.1, -2.5e-7, 3.0}, {1.0 / 3.0, 2.0, -7.25});
    std::ostringstream out;
    write_csv(out, d);
    CHECK(out.str().rfind("x0,y\n", 0) == 0);
    const auto back = dataset_from_csv(parse_csv(out.str()));
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(back.column(0)[k] == d.column(0)[k]);
      CHECK(back.target()[k] == d.target()[k]);
    }
  }
}

TEST_CASE("real formatting round-trips") {
  CHECK(format_real(0.05) == "0.05");
  CHECK(format_real(31.0) == "31");
  for (double v : {1.0 / 3.0, -2.3, 1e-300, 6.02214076e23, 4.747230226119881})
    CHECK(std::stod(format_real(v)) == v);
}

TEST_CASE("prior tables") {
  const auto hp = parse_prior_table("# comment\nsymbol alpha beta\n+ 1.5 0.2\nexp 3 0\n");
  CHECK(hp.alpha.at(Op::Add) == 1.5);
  CHECK(hp.beta.at(Op::Exp) == 0.0);
  std::ostringstream out;
  write_prior_table(out, hp);
  const auto back = parse_prior_table(out.str());
  CHECK(back.alpha == hp.alpha);
  CHECK(back.beta == hp.beta);
  CHECK_THROWS_AS(parse_prior_table("+ 1 -0.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_prior_table("+ 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_prior_table("% 1 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_prior_table("+ 1 0\n+ 2 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_prior_table("# nothing\n"), ValidationError);
  CHECK_THROWS_AS(read_prior_table("/nonexistent/prior.tsv"), IoError);
}

TEST_CASE("target moment tables") {
  const auto t = parse_target_moments("symbol mean mean_square\n+ 0.8 1.2\n* 0.3 0.4\n");
  CHECK(t.targets.at(Op::Mul).mean == 0.3);
  CHECK(t.targets.at(Op::Add).mean_square == 1.2);
  CHECK_THROWS_AS(parse_target_moments("+ 0.8\n"), ValidationError);
  CHECK_THROWS_AS(parse_target_moments("+ 0.8 1\n+ 0.1 1\n"), ValidationError);
  CHECK_THROWS_AS(read_target_moments("/nonexistent/targets.tsv"), IoError);
}

TEST_CASE("config files") {
  SUBCASE("defaults") {
    auto c = config_from_json(json::object());
    c.resolve();
    CHECK_NOTHROW(c.validate());
    CHECK(c.fit.seed == mix_seed(0, 3));
    CHECK(c.sampler.seed == mix_seed(0, 2));
    CHECK(c.prior.seed == mix_seed(0, 4));
    CHECK(c.score.fit.seed == c.fit.seed);
  }
  SUBCASE("overrides and explicit seeds") {
    auto c = config_from_json(json::parse(R"({
      "seed": 5,
      "fit": {"restarts": 3, "seed": 77},
      "sampler": {"steps": 123, "basis": ["+", "*"], "moves": {"relabel": 0.4, "prune_graft": 0.3,
                  "root_flip": 0.1, "leaf_swap": 0.2}},
      "experiment": {"ns": [10, 20], "sigmas": [0.5]},
      "ensemble": {"include_noise": true}
    })"));
    c.resolve();
    CHECK(c.fit.restarts == 3);
    CHECK(c.fit.seed == 77);
    CHECK(c.sampler.seed == mix_seed(5, 2));
    CHECK(c.sampler.steps == 123);
    CHECK(c.sampler.grammar.basis.size() == 2);
    CHECK(c.sampler.moves.relabel == 0.4);
    CHECK(c.experiment.ns == std::vector<std::size_t>{10, 20});
    CHECK(c.ensemble.include_noise);
    CHECK_NOTHROW(c.validate());
  }
  SUBCASE("a temperature ladder") {
    const auto c = config_from_json(json::parse(R"({"sampler": {"temperatures": 3, "ladder_ratio": 2.0}})"));
    CHECK(c.sampler.betas == std::vector<double>{1.0, 0.5, 0.25});
  }
  SUBCASE("to_json round-trips") {
    auto c = config_from_json(json::parse(R"({"seed": 9, "sampler": {"steps": 50}})"));
    c.resolve();
    auto back = config_from_json(c.to_json());
    back.resolve();
    CHECK(back.to_json() == c.to_json());
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"colour": 1})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"fit": {"restart": 3}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"fit": {"restarts": "three"}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"seed": -1})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"sampler": {"basis": ["+", "%"]}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"([1, 2])")), ValidationError);
    auto c = config_from_json(json::parse(R"({"sampler": {"betas": [1.0, 2.0]}})"));
    c.resolve();
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(read_config("/nonexistent/config.json"), IoError);
  }
  SUBCASE("malformed JSON file") {
    const auto p = std::filesystem::temp_directory_path() / "bsr_bad_config.json";
    write_text_file(p, "{\"seed\": ");
    CHECK_THROWS_AS(read_config(p), ValidationError);
    std::filesystem::remove(p);
  }
}
