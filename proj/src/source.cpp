#include "minipipe/source.hpp"

#include <cmath>
#include <numeric>

#include "minipipe/error.hpp"

namespace minipipe {

void ColumnSource::rewind() {
  throw CapabilityError("column source is not replayable (second pass requested)");
}

// ---------------------------------------------------------------------------

SpanStreamBuf::SpanStreamBuf(std::span<const std::byte> bytes) {
  auto* p = const_cast<char*>(reinterpret_cast<const char*>(bytes.data()));
  setg(p, p, p + bytes.size());
}

SpanStreamBuf::pos_type SpanStreamBuf::seekoff(off_type off, std::ios_base::seekdir dir,
                                               std::ios_base::openmode which) {
  if (!(which & std::ios_base::in)) return pos_type(off_type(-1));
  off_type base = 0;
  if (dir == std::ios_base::cur) base = gptr() - eback();
  if (dir == std::ios_base::end) base = egptr() - eback();
  const off_type target = base + off;
  if (target < 0 || target > egptr() - eback()) return pos_type(off_type(-1));
  setg(eback(), eback() + target, egptr());
  return pos_type(target);
}

SpanStreamBuf::pos_type SpanStreamBuf::seekpos(pos_type pos, std::ios_base::openmode which) {
  return seekoff(off_type(pos), std::ios_base::beg, which);
}

// ---------------------------------------------------------------------------

namespace {

StreamFrame data_frame(std::uint8_t slot, std::size_t column, SequenceCounter& seq,
                       std::vector<std::byte>&& payload) {
  StreamFrame f;
  const auto col = static_cast<std::uint16_t>(column);
  f.header = {FrameType::kData, slot, col, static_cast<std::uint32_t>(payload.size()),
              seq.next(slot, col)};
  f.payload = std::move(payload);
  return f;
}

}  // namespace

ColumnFileSource::ColumnFileSource(std::unique_ptr<std::streambuf> buf,
                                   std::shared_ptr<const void> owner, std::uint8_t slot)
    : owner_(std::move(owner)), buf_(std::move(buf)), in_(buf_.get()), slot_(slot) {
  reader_ = std::make_unique<ColumnFileReader>(in_);
}

std::unique_ptr<ColumnFileSource> ColumnFileSource::open_file(const std::filesystem::path& path,
                                                              std::uint8_t slot) {
  auto buf = std::make_unique<std::filebuf>();
  if (!buf->open(path, std::ios::in | std::ios::binary)) {
    throw IoError("cannot open '" + path.string() + "' for reading", 0);
  }
  return std::unique_ptr<ColumnFileSource>(new ColumnFileSource(std::move(buf), {}, slot));
}

std::unique_ptr<ColumnFileSource> ColumnFileSource::open_memory(std::span<const std::byte> bytes,
                                                                std::shared_ptr<const void> owner,
                                                                std::uint8_t slot) {
  return std::unique_ptr<ColumnFileSource>(
      new ColumnFileSource(std::make_unique<SpanStreamBuf>(bytes), std::move(owner), slot));
}

std::optional<StreamFrame> ColumnFileSource::next() {
  const auto column = reader_->peek_column();
  if (!column) return std::nullopt;
  const std::size_t width = reader_->header().element_width(*column);
  auto chunk = reader_->next(frame_payload_bytes(width) / width);
  return data_frame(slot_, chunk->column, seq_, std::move(chunk->bytes));
}

void ColumnFileSource::rewind() {
  reader_->rewind();
  seq_ = SequenceCounter{};
}

// ---------------------------------------------------------------------------

BatchSource::BatchSource(std::shared_ptr<const ColumnBatch> batch, std::uint8_t slot)
    : batch_(std::move(batch)), header_(batch_->header()), slot_(slot) {
  batch_->validate_layout();
}

std::optional<StreamFrame> BatchSource::next() {
  while (column_ < header_.column_count() && row_ == header_.row_count) {
    ++column_;
    row_ = 0;
  }
  if (column_ >= header_.column_count()) return std::nullopt;
  const std::size_t width = header_.element_width(column_);
  const std::uint64_t n =
      std::min<std::uint64_t>(frame_payload_bytes(width) / width, header_.row_count - row_);
  std::vector<std::byte> payload;
  payload.reserve(n * width);
  append_column_bytes(*batch_, column_, row_, n, payload);
  row_ += n;
  return data_frame(slot_, column_, seq_, std::move(payload));
}

void BatchSource::rewind() {
  column_ = 0;
  row_ = 0;
  seq_ = SequenceCounter{};
}

// ---------------------------------------------------------------------------

SyntheticSource::SyntheticSource(const DatasetSpec& spec, std::uint8_t slot)
    : spec_(spec), header_(spec.header()), slot_(slot) {
  spec_.validate();
}

std::optional<StreamFrame> SyntheticSource::next() {
  while (column_ < header_.column_count() && row_ == header_.row_count) {
    ++column_;
    row_ = 0;
    gen_.reset();
  }
  if (column_ >= header_.column_count()) return std::nullopt;
  if (!gen_) gen_.emplace(spec_, column_);
  const std::size_t width = header_.element_width(column_);
  const std::uint64_t n =
      std::min<std::uint64_t>(frame_payload_bytes(width) / width, header_.row_count - row_);
  std::vector<std::byte> payload;
  payload.reserve(n * width);
  gen_->generate(n, payload);
  row_ += n;
  return data_frame(slot_, column_, seq_, std::move(payload));
}

void SyntheticSource::rewind() {
  column_ = 0;
  row_ = 0;
  gen_.reset();
  seq_ = SequenceCounter{};
}

// ---------------------------------------------------------------------------

SocketSource::SocketSource(const net::Socket& socket, std::uint8_t slot, std::size_t window,
                           std::uint64_t control_first)
    : socket_(socket), slot_(slot), arbiter_(window) {
  arbiter_.expect(slot, kControlColumn, control_first);
  read_schema();
}

SocketSource::SocketSource(net::Socket&& owned, std::uint8_t slot, std::size_t window,
                           std::uint64_t control_first)
    : owned_(std::move(owned)), socket_(*owned_), slot_(slot), arbiter_(window) {
  arbiter_.expect(slot, kControlColumn, control_first);
  read_schema();
}

std::unique_ptr<SocketSource> SocketSource::connect(const net::Endpoint& endpoint,
                                                    std::size_t window) {
  return std::unique_ptr<SocketSource>(new SocketSource(net::Socket::connect(endpoint), 0, window, kFirstSequence));
}

void SocketSource::read_schema() {
  StreamFrame f = pull();
  if (f.header.type == FrameType::kError) {
    if (f.text().starts_with(kBusyTag)) throw BusyError(std::string(f.text()));
    throw ProtocolError("peer reported: " + std::string(f.text()));
  }
  if (f.header.type != FrameType::kData || f.header.column_index != kControlColumn) {
    throw ProtocolError("expected schema frame, got " + std::string(to_string(f.header.type)) +
                        " (sequence " + std::to_string(f.header.sequence) + ")");
  }
  header_ = ColumnFileHeader::decode(f.payload);
}

StreamFrame SocketSource::pull() {
  for (;;) {
    if (auto f = arbiter_.pop(slot_)) return std::move(*f);
    auto f = net::recv_frame(socket_);
    if (!f) {
      throw ProtocolError("connection closed before END (last good sequence " +
                          std::to_string(last_sequence_) + ")");
    }
    if (f->header.slot_id != slot_) {
      throw ProtocolError("frame for slot " + std::to_string(f->header.slot_id) +
                          " on a stream pinned to slot " + std::to_string(slot_));
    }
    arbiter_.push(std::move(*f));
  }
}

std::optional<StreamFrame> SocketSource::next() {
  if (ended_) return std::nullopt;
  StreamFrame f = pull();
  switch (f.header.type) {
    case FrameType::kData:
      if (f.header.column_index == kControlColumn) {
        throw ProtocolError("unexpected second schema frame (sequence " +
                            std::to_string(f.header.sequence) + ")");
      }
      last_sequence_ = f.header.sequence;
      return f;
    case FrameType::kEnd:
      arbiter_.finish();
      ended_ = true;
      return std::nullopt;
    case FrameType::kError:
      throw ProtocolError("peer reported: " + std::string(f.text()) + " (last good sequence " +
                          std::to_string(last_sequence_) + ")");
    default:
      throw ProtocolError("unexpected " + std::string(to_string(f.header.type)) +
                          " frame in column stream (sequence " +
                          std::to_string(f.header.sequence) + ")");
  }
}

// ---------------------------------------------------------------------------

void BatchSink::begin(const ColumnFileHeader& header) {
  header_ = header;
  batch_ = make_empty_batch(header);
}

void BatchSink::write(StreamFrame&& frame) {
  append_column_elements(batch_, frame.header.column_index, frame.payload);
}

void FileSink::begin(const ColumnFileHeader& header) {
  out_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::trunc);
  if (!*out_) throw IoError("cannot open '" + path_.string() + "' for writing", 0);
  writer_ = std::make_unique<ColumnFileWriter>(*out_, header);
}

void FileSink::write(StreamFrame&& frame) {
  writer_->append(frame.header.column_index, frame.payload);
}

void FileSink::end() {
  writer_->finish();
  out_->close();
}

void FileSink::abort(std::string_view) {
  writer_.reset();
  out_.reset();
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void FrameCollector::begin(const ColumnFileHeader& header) {
  const auto raw = header.encode();
  StreamFrame f;
  f.header = {FrameType::kData, slot_, kControlColumn, static_cast<std::uint32_t>(raw.size()),
              control_seq_++};
  f.payload.assign(raw.begin(), raw.end());
  frames_.push_back(std::move(f));
}

void FrameCollector::end() {
  frames_.push_back(make_text_frame(FrameType::kEnd, slot_, control_seq_++, ""));
}

std::uint64_t pump(ColumnSource& source, ColumnSink& sink) {
  std::uint64_t bytes = 0;
  sink.begin(source.header());
  while (auto f = source.next()) {
    bytes += f->payload.size();
    sink.write(std::move(*f));
  }
  sink.end();
  return bytes;
}

// ---------------------------------------------------------------------------

std::unique_ptr<ColumnSource> open_source(const Locator& locator) {
  return std::visit(
      [](const auto& loc) -> std::unique_ptr<ColumnSource> {
        using T = std::decay_t<decltype(loc)>;
        if constexpr (std::is_same_v<T, FileLocator>) {
          return ColumnFileSource::open_file(loc.path);
        } else if constexpr (std::is_same_v<T, MemoryLocator>) {
          if (!loc.bytes) throw ParamError("memory locator has no buffer");
          return ColumnFileSource::open_memory(*loc.bytes, loc.bytes);
        } else {
          return SocketSource::connect(loc.endpoint);
        }
      },
      locator);
}

ColumnStreamServer::ColumnStreamServer(const net::Endpoint& bind, Factory factory)
    : listener_(net::Socket::listen(bind)), endpoint_(bind), factory_(std::move(factory)) {
  endpoint_.port = listener_.local_port();
  if (endpoint_.host.empty() || endpoint_.host == "0.0.0.0") endpoint_.host = "127.0.0.1";
  acceptor_ = std::jthread([this] { accept_loop(); });
}

ColumnStreamServer::~ColumnStreamServer() { stop(); }

void ColumnStreamServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown_both();
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard lock(mu_);
  workers_.clear();
}

void ColumnStreamServer::accept_loop() {
  while (!stopping_) {
    net::Socket conn = listener_.accept();
    if (!conn.valid()) break;
    std::lock_guard lock(mu_);
    workers_.emplace_back([this, c = std::move(conn)]() mutable {
      try {
        auto source = factory_();
        SequenceCounter seq;
        const auto raw = source->header().encode();
        StreamFrame schema;
        schema.header = {FrameType::kData, 0, kControlColumn,
                         static_cast<std::uint32_t>(raw.size()), seq.next(0, kControlColumn)};
        schema.payload.assign(raw.begin(), raw.end());
        net::send_frame(c, schema);
        while (auto f = source->next()) net::send_frame(c, *f);
        net::send_frame(c, make_text_frame(FrameType::kEnd, 0, seq.next(0, kControlColumn), ""));
      } catch (const std::exception&) {
        // Peer went away; nothing to report to.
      }
    });
  }
}

// ---------------------------------------------------------------------------

ThroughputStats summarize(std::vector<double> samples) {
  ThroughputStats s;
  s.samples = std::move(samples);
  if (s.samples.empty()) return s;
  s.mean = std::accumulate(s.samples.begin(), s.samples.end(), 0.0) /
           static_cast<double>(s.samples.size());
  if (s.samples.size() > 1) {
    double ss = 0.0;
    for (double x : s.samples) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.samples.size() - 1));
  }
  return s;
}

ThroughputStats measure_source_throughput(
    const std::function<std::unique_ptr<ColumnSource>()>& open,
    std::chrono::duration<double> duration, std::size_t trials) {
  using clock = std::chrono::steady_clock;
  trials = std::max<std::size_t>(trials, 5);
  std::vector<double> samples;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uint64_t bytes = 0;
    const auto start = clock::now();
    auto elapsed = std::chrono::duration<double>::zero();
    do {
      auto source = open();
      std::uint64_t pass = 0;
      while (auto f = source->next()) pass += f->payload.size();
      bytes += pass;
      elapsed = clock::now() - start;
      if (pass == 0) break;  // nothing to stream; avoid spinning on reopen
    } while (elapsed < duration);
    const double secs = elapsed.count();
    samples.push_back(bytes == 0 || secs <= 0.0 ? 0.0 : static_cast<double>(bytes) / secs);
  }
  return summarize(std::move(samples));
}

ThroughputStats measure_source_throughput(const Locator& locator,
                                          std::chrono::duration<double> duration,
                                          std::size_t trials) {
  return measure_source_throughput([&] { return open_source(locator); }, duration, trials);
}

}  // namespace minipipe
