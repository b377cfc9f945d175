#pragma once
// Column streams: where frames come from and where they go.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <streambuf>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "minipipe/arbiter.hpp"
#include "minipipe/colfmt.hpp"
#include "minipipe/frame.hpp"
#include "minipipe/net.hpp"

namespace minipipe {

/// Pull-based stream of DATA frames in column order.
class ColumnSource {
 public:
  virtual ~ColumnSource() = default;

  /// Schema of the stream.
  virtual const ColumnFileHeader& header() const = 0;
  /// Next DATA frame, or nullopt once every column has been delivered.
  virtual std::optional<StreamFrame> next() = 0;

  virtual bool replayable() const { return false; }
  /// Restarts from the first column. Throws CapabilityError unless replayable().
  virtual void rewind();
};

/// Push-based consumer of a column stream.
class ColumnSink {
 public:
  virtual ~ColumnSink() = default;
  virtual void begin(const ColumnFileHeader& header) = 0;
  virtual void write(StreamFrame&& frame) = 0;
  virtual void end() = 0;
  /// Called instead of end() when the producing job fails or is preempted.
  virtual void abort(std::string_view /*reason*/) {}
};

// ---------------------------------------------------------------------------
// Sources

/// Read-only streambuf over caller-owned bytes.
class SpanStreamBuf : public std::streambuf {
 public:
  explicit SpanStreamBuf(std::span<const std::byte> bytes);

 protected:
  pos_type seekoff(off_type off, std::ios_base::seekdir dir,
                   std::ios_base::openmode which) override;
  pos_type seekpos(pos_type pos, std::ios_base::openmode which) override;
};

/// Column file on disk or in memory, streamed with a ColumnFileReader.
class ColumnFileSource : public ColumnSource {
 public:
  static std::unique_ptr<ColumnFileSource> open_file(const std::filesystem::path& path,
                                                     std::uint8_t slot = 0);
  /// `bytes` must outlive the source unless `owner` keeps it alive.
  static std::unique_ptr<ColumnFileSource> open_memory(std::span<const std::byte> bytes,
                                                       std::shared_ptr<const void> owner = {},
                                                       std::uint8_t slot = 0);

  const ColumnFileHeader& header() const override { return reader_->header(); }
  std::optional<StreamFrame> next() override;
  bool replayable() const override { return true; }
  void rewind() override;

 private:
  ColumnFileSource(std::unique_ptr<std::streambuf> buf, std::shared_ptr<const void> owner,
                   std::uint8_t slot);

  std::shared_ptr<const void> owner_;
  std::unique_ptr<std::streambuf> buf_;
  std::istream in_;
  std::unique_ptr<ColumnFileReader> reader_;
  std::uint8_t slot_;
  SequenceCounter seq_;
};

/// Frames straight out of an in-memory batch, no serialization pass.
class BatchSource : public ColumnSource {
 public:
  explicit BatchSource(std::shared_ptr<const ColumnBatch> batch, std::uint8_t slot = 0);

  const ColumnFileHeader& header() const override { return header_; }
  std::optional<StreamFrame> next() override;
  bool replayable() const override { return true; }
  void rewind() override;

 private:
  std::shared_ptr<const ColumnBatch> batch_;
  ColumnFileHeader header_;
  std::uint8_t slot_;
  std::size_t column_ = 0;
  std::uint64_t row_ = 0;
  SequenceCounter seq_;
};

/// Lazily generated synthetic dataset; memory use is one frame.
class SyntheticSource : public ColumnSource {
 public:
  explicit SyntheticSource(const DatasetSpec& spec, std::uint8_t slot = 0);

  const ColumnFileHeader& header() const override { return header_; }
  std::optional<StreamFrame> next() override;
  bool replayable() const override { return true; }
  void rewind() override;

 private:
  DatasetSpec spec_;
  ColumnFileHeader header_;
  std::uint8_t slot_;
  std::size_t column_ = 0;
  std::uint64_t row_ = 0;
  std::optional<SyntheticColumnGenerator> gen_;
  SequenceCounter seq_;
};

/// Hides rewind() of the wrapped source, modelling a one-shot stream.
class OneShotSource : public ColumnSource {
 public:
  explicit OneShotSource(std::unique_ptr<ColumnSource> inner) : inner_(std::move(inner)) {}
  const ColumnFileHeader& header() const override { return inner_->header(); }
  std::optional<StreamFrame> next() override { return inner_->next(); }

 private:
  std::unique_ptr<ColumnSource> inner_;
};

/// Column stream read off a connected socket. Frames pass through an
/// Arbiter; the stream ends at END. Not replayable.
class SocketSource : public ColumnSource {
 public:
  /// Reads frames until the schema frame arrives. `control_first` is the
  /// sequence expected on the control column, past any handshake frames.
  SocketSource(const net::Socket& socket, std::uint8_t slot, std::size_t window,
               std::uint64_t control_first = kFirstSequence);
  /// Connects to a column stream server and reads its schema.
  static std::unique_ptr<SocketSource> connect(const net::Endpoint& endpoint,
                                               std::size_t window = 64);

  const ColumnFileHeader& header() const override { return header_; }
  std::optional<StreamFrame> next() override;
  bool finished() const { return ended_; }
  std::uint64_t last_sequence() const { return last_sequence_; }

 private:
  SocketSource(net::Socket&& owned, std::uint8_t slot, std::size_t window,
               std::uint64_t control_first);
  void read_schema();
  StreamFrame pull();

  std::optional<net::Socket> owned_;
  const net::Socket& socket_;
  std::uint8_t slot_;
  Arbiter arbiter_;
  ColumnFileHeader header_;
  bool ended_ = false;
  std::uint64_t last_sequence_ = 0;
};

// ---------------------------------------------------------------------------
// Sinks

/// Rebuilds the stream into a ColumnBatch.
class BatchSink : public ColumnSink {
 public:
  void begin(const ColumnFileHeader& header) override;
  void write(StreamFrame&& frame) override;
  void end() override { ended_ = true; }
  void abort(std::string_view reason) override { abort_reason_ = std::string(reason); }

  bool ended() const { return ended_; }
  const std::optional<std::string>& abort_reason() const { return abort_reason_; }
  ColumnBatch& batch() { return batch_; }
  ColumnBatch take() { return std::move(batch_); }

 private:
  ColumnBatch batch_;
  ColumnFileHeader header_;
  bool ended_ = false;
  std::optional<std::string> abort_reason_;
};

/// Writes a column file.
class FileSink : public ColumnSink {
 public:
  explicit FileSink(std::filesystem::path path) : path_(std::move(path)) {}
  void begin(const ColumnFileHeader& header) override;
  void write(StreamFrame&& frame) override;
  void end() override;
  void abort(std::string_view reason) override;
  std::uint64_t bytes_written() const { return writer_ ? writer_->bytes_written() : 0; }

 private:
  std::filesystem::path path_;
  std::unique_ptr<std::ofstream> out_;
  std::unique_ptr<ColumnFileWriter> writer_;
};

/// Discards data, counting payload bytes and frames.
class CountingSink : public ColumnSink {
 public:
  void begin(const ColumnFileHeader&) override {}
  void write(StreamFrame&& frame) override {
    bytes_ += frame.payload.size();
    ++frames_;
  }
  void end() override {}
  std::uint64_t bytes() const { return bytes_; }
  std::uint64_t frames() const { return frames_; }

 private:
  std::uint64_t bytes_ = 0;
  std::uint64_t frames_ = 0;
};

/// Keeps every frame, including schema and END, as it would go on the wire.
class FrameCollector : public ColumnSink {
 public:
  explicit FrameCollector(std::uint8_t slot = 0) : slot_(slot) {}
  void begin(const ColumnFileHeader& header) override;
  void write(StreamFrame&& frame) override { frames_.push_back(std::move(frame)); }
  void end() override;
  std::vector<StreamFrame>& frames() { return frames_; }

 private:
  std::uint8_t slot_;
  std::vector<StreamFrame> frames_;
  std::uint64_t control_seq_ = kFirstSequence;
};

/// Pulls `source` dry into `sink`. Returns DATA payload bytes moved.
std::uint64_t pump(ColumnSource& source, ColumnSink& sink);

// ---------------------------------------------------------------------------
// Locators

struct FileLocator {
  std::filesystem::path path;
};
struct MemoryLocator {
  std::shared_ptr<const std::vector<std::byte>> bytes;
};
struct NetworkLocator {
  net::Endpoint endpoint;
};
using Locator = std::variant<FileLocator, MemoryLocator, NetworkLocator>;

/// File and memory sources are replayable; network sources are not.
std::unique_ptr<ColumnSource> open_source(const Locator& locator);

/// Serves a column stream (schema, DATA frames, END) to every client that
/// connects, one thread per connection. Used as the far end of network
/// sources.
class ColumnStreamServer {
 public:
  using Factory = std::function<std::unique_ptr<ColumnSource>()>;

  ColumnStreamServer(const net::Endpoint& bind, Factory factory);
  ~ColumnStreamServer();
  ColumnStreamServer(const ColumnStreamServer&) = delete;
  ColumnStreamServer& operator=(const ColumnStreamServer&) = delete;

  net::Endpoint endpoint() const { return endpoint_; }
  void stop();

 private:
  void accept_loop();

  net::Socket listener_;
  net::Endpoint endpoint_;
  Factory factory_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::jthread> workers_;
  std::jthread acceptor_;
};

// ---------------------------------------------------------------------------
// Throughput

struct ThroughputStats {
  std::vector<double> samples;  // bytes/second per trial
  double mean = 0.0;
  double stddev = 0.0;
};

/// Sustained read rate of sources produced by `open`, over `duration` per
/// trial. Counts DATA payload bytes. A source with no payload reports 0.
ThroughputStats measure_source_throughput(const std::function<std::unique_ptr<ColumnSource>()>& open,
                                          std::chrono::duration<double> duration,
                                          std::size_t trials = 5);

ThroughputStats measure_source_throughput(const Locator& locator,
                                          std::chrono::duration<double> duration,
                                          std::size_t trials = 5);

/// Sample mean and (n-1) standard deviation.
ThroughputStats summarize(std::vector<double> samples);

}  // namespace minipipe
