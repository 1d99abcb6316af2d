#include <doctest.h>

#include "depthkit/config.hpp"

using namespace depthkit;

TEST_CASE("sections, comments and typed getters") {
  const auto kv = KeyValueFile::parse(
      "top = 1\n"
      "# comment line\n"
      "[train]\n"
      "  learning_rate = 0.0001   # trailing comment\n"
      "batch_size=8\n"
      "flag = Yes\n"
      "[data]\n"
      "root = some dir/x\n");
  CHECK(kv.get_int("top", 0) == 1);
  CHECK(kv.get_double("train.learning_rate", 0.0) == 0.0001);
  CHECK(kv.get_int("train.batch_size", 0) == 8);
  CHECK(kv.get_bool("train.flag", false));
  CHECK(kv.get_string("data.root", "") == "some dir/x");
  CHECK(kv.get_int("train.missing", 7) == 7);
  CHECK_NOTHROW(kv.reject_unused());
}

TEST_CASE("malformed files report the line") {
  auto message = [](const std::string& text) {
    try {
      KeyValueFile::parse(text, "exp.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("a = 1\n[broken\n").find("exp.cfg:2") != std::string::npos);
  CHECK(message("a = 1\nno equals sign\n").find("exp.cfg:2") != std::string::npos);
  CHECK(message("[s]\na = 1\n\na = 2\n").find("exp.cfg:4: duplicate key 's.a'") != std::string::npos);
  CHECK(message("= 3\n").find("missing key") != std::string::npos);
}

TEST_CASE("type errors name key and line") {
  const auto kv = KeyValueFile::parse("[train]\nbatch_size = eight\nlr = 1e-4x\nflag = maybe\n", "exp.cfg");
  CHECK_THROWS_WITH_AS(kv.get_int("train.batch_size", 0), doctest::Contains("exp.cfg:2"), ConfigError);
  CHECK_THROWS_WITH_AS(kv.get_double("train.lr", 0), doctest::Contains("exp.cfg:3"), ConfigError);
  CHECK_THROWS_WITH_AS(kv.get_bool("train.flag", false), doctest::Contains("exp.cfg:4"), ConfigError);
}

TEST_CASE("unknown keys are rejected with their lines") {
  const auto kv = KeyValueFile::parse("[train]\nbatch_size = 8\nbacth_size = 4\n[model]\nwidht = 3\n", "exp.cfg");
  kv.get_int("train.batch_size", 0);
  try {
    kv.reject_unused();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("exp.cfg:3: unknown key 'train.bacth_size'") != std::string::npos);
    CHECK(msg.find("exp.cfg:5: unknown key 'model.widht'") != std::string::npos);
    CHECK(msg.find("'train.batch_size'") == std::string::npos);
  }
}

TEST_CASE("format_key_values round trips through parse") {
  const std::vector<std::pair<std::string, std::string>> items{
      {"name", "toy"}, {"model.backbone", "tiny"}, {"train.seed", "3"}, {"model.width", "0.5"}};
  const std::string text = format_key_values(items);
  CHECK(text.find("name = toy") < text.find("[model]"));
  const auto kv = KeyValueFile::parse(text);
  for (const auto& [k, v] : items) CHECK(kv.get_string(k, "") == v);
  CHECK(kv.keys().size() == items.size());
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(KeyValueFile::load("/nonexistent/file.cfg"), ConfigError);
}
