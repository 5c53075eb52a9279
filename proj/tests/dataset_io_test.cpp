#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "leanpo/dataset_io.hpp"
#include "test_support.hpp"

using namespace leanpo;

namespace {

PreferencePair sample_pair(std::size_t i) {
  PreferencePair p;
  p.id = record_id(i);
  p.video = {14, 14, 15, 15, 16, 16};
  p.query = {5};
  p.answer = {14};
  p.winning = {9, 14, 13, 14, 15};
  p.losing = {9, 16, 13};
  p.reward_win_sft = -0.1234567890123456789 * static_cast<double>(i + 1);
  p.reward_lose_sft = -std::nextafter(2.0 / 3.0, 1.0) * static_cast<double>(i + 1);
  p.augmentation = "frame-drop:0.3";
  p.seed = std::numeric_limits<std::uint64_t>::max() - i;
  return p;
}

Dataset sample_dataset(std::size_t n) {
  Dataset d;
  d.header.seed = 7;
  d.header.model_digest = "0123456789abcdef";
  d.header.spec = WorldSpec::standard();
  d.header.augmentation = "frame-drop:0.3";
  for (std::size_t i = 0; i < n; ++i) d.pairs.push_back(sample_pair(i));
  d.header.count = n;
  return d;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::size_t failing_line(const std::string& text) {
  try {
    parse_dataset(text, Vocab{});
  } catch (const DatasetError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(DatasetFile, RoundTripIsExact) {
  const Dataset d = sample_dataset(5);
  const std::string text = dataset_text(d);
  const Dataset back = parse_dataset(text, Vocab{});
  ASSERT_EQ(back.pairs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(back.pairs[i], d.pairs[i]);
  EXPECT_EQ(back.header.seed, 7u);
  EXPECT_EQ(back.header.model_digest, d.header.model_digest);
  EXPECT_EQ(back.header.spec.event_tokens, d.header.spec.event_tokens);
  EXPECT_EQ(back.header.pipeline_version, kPipelineVersion);
  EXPECT_EQ(dataset_text(back), text);
}

TEST(DatasetFile, OneLinePerRecordPlusHeader) {
  const auto lines = lines_of(dataset_text(sample_dataset(4)));
  EXPECT_EQ(lines.size(), 5u);
  EXPECT_NE(lines[1].find("\"reward-win-sft\""), std::string::npos);
  EXPECT_NE(lines[1].find("\"winning\":[9,14,13,14,15]"), std::string::npos);
}

TEST(DatasetFile, FirstBadLineIsNamed) {
  auto lines = lines_of(dataset_text(sample_dataset(4)));
  auto broken = lines;
  broken[2] = "{not json";
  EXPECT_EQ(failing_line(join_lines(broken)), 3u);

  broken = lines;
  broken[3].replace(broken[3].find("\"losing\""), 8, "\"loosing\"");
  EXPECT_EQ(failing_line(join_lines(broken)), 4u);

  broken = lines;
  broken[1].insert(1, "\"extra\":1,");
  EXPECT_EQ(failing_line(join_lines(broken)), 2u);

  broken = lines;  // reserved SEP inside a response
  broken[2].replace(broken[2].find("\"winning\":[9"), 12, "\"winning\":[2");
  EXPECT_EQ(failing_line(join_lines(broken)), 3u);

  broken = lines;  // empty losing response
  const auto pos = broken[4].find("\"losing\":[");
  broken[4].replace(pos, broken[4].find(']', pos) - pos + 1, "\"losing\":[]");
  EXPECT_EQ(failing_line(join_lines(broken)), 5u);

  broken = lines;  // token outside the vocabulary
  broken[1].replace(broken[1].find("\"query\":[5]"), 11, "\"query\":[99]");
  EXPECT_EQ(failing_line(join_lines(broken)), 2u);
}

TEST(DatasetFile, HeaderProblemsRejected) {
  auto lines = lines_of(dataset_text(sample_dataset(2)));
  EXPECT_EQ(failing_line(join_lines({lines[1], lines[2]})), 1u);
  EXPECT_GT(failing_line(join_lines({lines[0], lines[1]})), 0u);  // count mismatch
  EXPECT_EQ(failing_line(""), 1u);
  auto v2 = lines;
  v2[0].replace(v2[0].find("\"pipeline-version\":1"), 20, "\"pipeline-version\":2");
  EXPECT_EQ(failing_line(join_lines(v2)), 1u);
}

TEST(DatasetFile, SaveLoadAndUnwritablePath) {
  const auto dir = testing_support::scratch_dir("dsio");
  const Dataset d = sample_dataset(3);
  save_dataset(d, dir / "d.jsonl");
  EXPECT_EQ(load_dataset(dir / "d.jsonl", Vocab{}).pairs, d.pairs);
  try {
    save_dataset(d, dir / "missing" / "d.jsonl");
    FAIL() << "expected an error";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(dir / "nope.jsonl", Vocab{}), InvalidInput);
  std::filesystem::remove_all(dir);
}
