#include <cstring>
#include <fstream>

#include "support.hpp"

using namespace mi;

namespace {

Recording random_recording(Pcg32& rng) {
  Recording r;
  const auto nc = 1 + rng.next_u32() % 5;
  const auto ns = 1 + rng.next_u32() % 300;
  r.fs = 128.0 + rng.next_u32() % 512;
  r.samples.resize(ns, nc);
  for (Eigen::Index i = 0; i < r.samples.size(); ++i)
    r.samples.data()[i] = static_cast<float>(200.0 * (rng.uniform() - 0.5));
  for (std::size_t c = 0; c < nc; ++c) r.channel_labels.push_back("ch" + std::to_string(c));
  const auto ne = rng.next_u32() % 6;
  std::vector<std::size_t> at;
  for (std::size_t e = 0; e < ne; ++e) at.push_back(rng.next_u32() % ns);
  std::sort(at.begin(), at.end());
  for (std::size_t i : at) r.events.push_back({i, static_cast<EventKind>(rng.next_u32() % 5), rng.next_u32() % 3});
  return r;
}

SessionMeta meta_for(const Recording& r) {
  SessionMeta m;
  m.subject = "s1";
  m.sensor = Sensor::Politag;
  m.session_kind = SessionKind::Online1;
  m.n_runs = 3;
  m.fs = r.fs;
  m.channel_labels = r.channel_labels;
  return m;
}

}  // namespace

TEST(IoSession, RoundTripIsExact) {
  Pcg32 rng(3, 1);
  const auto dir = support::scratch("io_roundtrip");
  for (int it = 0; it < 50; ++it) {
    const Recording r = random_recording(rng);
    io::save_session(r, meta_for(r), dir / std::to_string(it));
    const Session s = io::load_session(dir / std::to_string(it));
    ASSERT_EQ(s.recording.samples.rows(), r.samples.rows());
    ASSERT_EQ(s.recording.samples.cols(), r.samples.cols());
    EXPECT_TRUE((s.recording.samples.array() == r.samples.array()).all());
    EXPECT_EQ(s.recording.fs, r.fs);
    EXPECT_EQ(s.recording.channel_labels, r.channel_labels);
    ASSERT_EQ(s.recording.events.size(), r.events.size());
    for (std::size_t e = 0; e < r.events.size(); ++e) {
      EXPECT_EQ(s.recording.events[e].sample_index, r.events[e].sample_index);
      EXPECT_EQ(s.recording.events[e].kind, r.events[e].kind);
      EXPECT_EQ(s.recording.events[e].run_index, r.events[e].run_index);
    }
    EXPECT_EQ(s.meta.subject, "s1");
    EXPECT_EQ(s.meta.sensor, Sensor::Politag);
    EXPECT_EQ(s.meta.session_kind, SessionKind::Online1);
  }
}

TEST(IoSession, SingleSampleIsFourBytes) {
  Recording r;
  r.samples.resize(1, 1);
  r.samples(0, 0) = 1.0;
  r.channel_labels = {"Cz"};
  const auto dir = support::scratch("io_one");
  io::save_session(r, meta_for(r), dir);
  EXPECT_EQ(std::filesystem::file_size(dir / io::kSamplesFile), 4u);
  const auto bytes = io::read_bytes(dir / io::kSamplesFile);
  // 1.0f little-endian
  EXPECT_EQ(bytes, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f}));
}

TEST(IoSession, SampleOrderIsRowMajor) {
  Recording r;
  r.samples.resize(2, 2);
  r.samples << 1, 2, 3, 4;
  r.channel_labels = {"a", "b"};
  const auto dir = support::scratch("io_order");
  io::save_session(r, meta_for(r), dir);
  const auto bytes = io::read_bytes(dir / io::kSamplesFile);
  ASSERT_EQ(bytes.size(), 16u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(io::get_f32le(bytes.data() + 4 * i), static_cast<float>(i + 1));
}

TEST(IoSession, MissingDirectory) {
  EXPECT_MI_ERROR(io::load_session("/nonexistent/mi_decode/session"), ErrorCode::MissingFile);
}

TEST(IoSession, TruncatedSamples) {
  Pcg32 rng(5, 1);
  Recording r = random_recording(rng);
  r.samples.conservativeResize(10, 2);
  r.channel_labels = {"a", "b"};
  r.events.clear();
  const auto dir = support::scratch("io_trunc");
  io::save_session(r, meta_for(r), dir);
  auto bytes = io::read_bytes(dir / io::kSamplesFile);
  bytes.resize(bytes.size() - 4);
  io::write_bytes(dir / io::kSamplesFile, bytes);
  EXPECT_MI_ERROR(io::load_session(dir), ErrorCode::LengthMismatch);
}

TEST(IoSession, UnsortedEventsRejected) {
  Recording r;
  r.samples = SampleMatrix::Zero(20, 1);
  r.channel_labels = {"Cz"};
  r.events = {{2, EventKind::TrialStart, 0}, {5, EventKind::CueLeft, 0}};
  const auto dir = support::scratch("io_unsorted");
  io::save_session(r, meta_for(r), dir);
  auto j = nlohmann::json::parse(io::read_text(dir / io::kMetaFile));
  std::swap(j["events"][0], j["events"][1]);
  io::write_text(dir / io::kMetaFile, j.dump());
  EXPECT_MI_ERROR(io::load_session(dir), ErrorCode::UnsortedEvents);
}

TEST(IoSession, MalformedMeta) {
  Recording r;
  r.samples = SampleMatrix::Zero(4, 1);
  r.channel_labels = {"Cz"};
  const auto dir = support::scratch("io_malformed");
  io::save_session(r, meta_for(r), dir);
  io::write_text(dir / io::kMetaFile, "{not json");
  EXPECT_MI_ERROR(io::load_session(dir), ErrorCode::MalformedMeta);
  auto j = io::meta_to_json(r, meta_for(r));
  j.erase("fs");
  io::write_text(dir / io::kMetaFile, j.dump());
  EXPECT_MI_ERROR(io::load_session(dir), ErrorCode::MalformedMeta);
}

TEST(IoCsv, ImportWithEvents) {
  const std::string text =
      "C3,C4,marker\n"
      "1.5,2,0\n"
      "\"3\",4,2\n"
      "5,6,0\n";
  io::CsvImportOptions opt;
  opt.fs = 256;
  opt.event_column = "marker";
  opt.event_map = io::parse_event_map("2=CueLeft");
  const Recording r = io::import_csv_text(text, opt);
  EXPECT_EQ(r.n_samples(), 3u);
  EXPECT_EQ(r.channel_labels, (std::vector<std::string>{"C3", "C4"}));
  EXPECT_DOUBLE_EQ(r.samples(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(r.samples(1, 0), 3.0);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].sample_index, 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::CueLeft);
  EXPECT_EQ(r.fs, 256.0);
}

TEST(IoCsv, Errors) {
  io::CsvImportOptions opt;
  EXPECT_MI_ERROR(io::import_csv_text("a,b\n1,2\n3\n", opt), ErrorCode::RaggedRows);
  EXPECT_MI_ERROR(io::import_csv_text("a,b\n1,x\n", opt), ErrorCode::NonNumericCell);
  opt.event_column = "e";
  opt.event_map = io::parse_event_map("1=TrialStart");
  EXPECT_MI_ERROR(io::import_csv_text("a,e\n1,7\n", opt), ErrorCode::UnknownEventCode);
  EXPECT_MI_ERROR(io::import_csv("/nonexistent.csv", opt), ErrorCode::MissingFile);
}

TEST(IoCsv, HeaderlessUsesIndices) {
  io::CsvImportOptions opt;
  opt.has_header = false;
  opt.event_column = "2";
  opt.event_map = io::parse_event_map("1=TrialStart");
  const Recording r = io::import_csv_text("1,2,1\n3,4,0\n", opt);
  EXPECT_EQ(r.n_channels(), 2u);
  EXPECT_EQ(r.channel_labels, (std::vector<std::string>{"ch0", "ch1"}));
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::TrialStart);
}
