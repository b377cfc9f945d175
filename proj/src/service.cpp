#include "minipipe/service.hpp"

#include "minipipe/error.hpp"
#include "minipipe/pipeline_spec.hpp"

namespace minipipe {

std::string_view to_string(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::kConfiguring: return "configuring";
    case SessionPhase::kPass1: return "pass1";
    case SessionPhase::kPass2: return "pass2";
    case SessionPhase::kStreaming: return "streaming";
    case SessionPhase::kClosed: return "closed";
  }
  return "unknown";
}

namespace {

// Control-column sequences on a session. CONFIG and ACK take the first
// sequence of their direction; the column streams continue after them.
constexpr std::uint64_t kHandshakeSequence = kFirstSequence;

/// First control sequence of a column stream on `slot` after the handshake.
/// CONFIG travels on slot 0, so only slot 0 has used a client sequence.
std::uint64_t client_stream_control_first(std::uint8_t slot) {
  return slot == 0 ? kHandshakeSequence + 1 : kFirstSequence;
}

/// Sends the processed stream back over the session socket.
class NetworkSink : public ColumnSink {
 public:
  NetworkSink(const net::Socket& socket, std::uint8_t slot, const std::atomic<bool>& killing)
      : socket_(socket), slot_(slot), killing_(killing) {}

  void begin(const ColumnFileHeader& header) override {
    const auto raw = header.encode();
    StreamFrame f;
    f.header = {FrameType::kData, slot_, kControlColumn, static_cast<std::uint32_t>(raw.size()),
                control_seq_++};
    f.payload.assign(raw.begin(), raw.end());
    net::send_frame(socket_, f);
  }

  void write(StreamFrame&& frame) override { net::send_frame(socket_, frame); }

  void end() override {
    closed_ = true;
    net::send_frame(socket_, make_text_frame(FrameType::kEnd, slot_, control_seq_++, ""));
  }

  void abort(std::string_view reason) override {
    if (closed_) return;
    closed_ = true;
    std::string text(reason);
    if (killing_) text = "server stopping: " + text;
    try {
      net::send_frame(socket_, make_text_frame(FrameType::kError, slot_, control_seq_++, text));
    } catch (const std::exception&) {
      // The peer is gone; nobody is left to tell.
    }
  }

  bool closed() const { return closed_; }
  std::uint64_t next_control_sequence() { return control_seq_++; }

 private:
  const net::Socket& socket_;
  std::uint8_t slot_;
  const std::atomic<bool>& killing_;
  // ACK used the first server sequence on this slot's control column.
  std::uint64_t control_seq_ = kHandshakeSequence + 1;
  bool closed_ = false;
};

void send_error(const net::Socket& socket, std::uint8_t slot, std::uint64_t seq,
                const std::string& text) {
  try {
    net::send_frame(socket, make_text_frame(FrameType::kError, slot, seq, text));
  } catch (const std::exception&) {
  }
}

}  // namespace

Server::Server(const net::Endpoint& bind, EngineConfig config)
    : engine_(std::move(config)), listener_(net::Socket::listen(bind)), endpoint_(bind) {
  endpoint_.port = listener_.local_port();
  if (endpoint_.host.empty() || endpoint_.host == "0.0.0.0") endpoint_.host = "127.0.0.1";
  acceptor_ = std::jthread([this] { accept_loop(); });
}

Server::~Server() { stop(false); }

void Server::stop(bool graceful) {
  if (!graceful) killing_ = true;
  if (!stopping_.exchange(true)) {
    listener_.shutdown_both();
    if (acceptor_.joinable()) acceptor_.join();
  }
  if (!graceful) {
    std::lock_guard lock(mu_);
    for (auto& s : sessions_) {
      if (s->done) continue;
      s->socket.shutdown_read();
      if (s->slot) engine_.cancel(*s->slot);
    }
  }
  std::list<std::unique_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    all.swap(sessions_);
  }
  for (auto& s : all) {
    if (s->thread.joinable()) s->thread.join();
  }
}

void Server::accept_loop() {
  while (!stopping_) {
    net::Socket conn = listener_.accept();
    if (!conn.valid()) break;
    reap();
    std::lock_guard lock(mu_);
    auto s = std::make_unique<Session>();
    s->id = next_session_id_++;
    s->socket = std::move(conn);
    Session& ref = *s;
    sessions_.push_back(std::move(s));
    ref.thread = std::jthread([this, &ref] { handle(ref); });
  }
}

void Server::reap() {
  std::list<std::unique_ptr<Session>> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if ((*it)->done) {
        finished.push_back(std::move(*it));
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : finished) {
    if (s->thread.joinable()) s->thread.join();
  }
}

void Server::handle(Session& s) {
  std::optional<std::size_t> leased;
  try {
    auto first = net::recv_frame(s.socket);
    if (first && first->header.type != FrameType::kConfig) {
      send_error(s.socket, 0, kHandshakeSequence,
                 "unconfigured session: expected CONFIG, got " +
                     std::string(to_string(first->header.type)));
    } else if (first) {
      std::optional<PipelineSpec> spec;
      try {
        spec = compile_spec(first->text());
      } catch (const SpecError& e) {
        send_error(s.socket, 0, kHandshakeSequence, std::string("bad CONFIG: ") + e.what());
      }
      if (spec) {
        leased = engine_.acquire_slot();
        if (!leased) {
          send_error(s.socket, 0, kHandshakeSequence,
                     std::string(kBusyTag) + ": all " + std::to_string(engine_.slot_count()) +
                         " slots in use");
        } else {
          const auto slot = static_cast<std::uint8_t>(*leased);
          engine_.reconfigure(slot, *spec);
          {
            std::lock_guard lock(mu_);
            s.slot = slot;
            s.spec_id = spec->id;
          }
          net::send_frame(s.socket, make_text_frame(FrameType::kAck, slot, kHandshakeSequence,
                                                    spec->to_text()));
          NetworkSink sink(s.socket, slot, killing_);
          try {
            SocketSource input(s.socket, slot, engine_.config().queue_depth,
                               client_stream_control_first(slot));
            s.phase = spec->stateful ? SessionPhase::kPass1 : SessionPhase::kStreaming;
            JobOptions options;
            options.on_pass = [&s](int pass) {
              s.phase = pass == 1 ? SessionPhase::kPass1 : SessionPhase::kPass2;
            };
            // Failures reach the client through sink.abort().
            engine_.submit(slot, input, sink, std::move(options)).get();
          } catch (const std::exception& e) {
            sink.abort(e.what());
          }
        }
      }
    }
  } catch (const std::exception& e) {
    send_error(s.socket, leased ? static_cast<std::uint8_t>(*leased) : 0, kHandshakeSequence,
               e.what());
  }
  if (leased) engine_.release_slot(*leased);
  s.phase = SessionPhase::kClosed;
  s.socket.shutdown_both();
  s.done = true;
}

std::vector<SessionInfo> Server::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<SessionInfo> out;
  for (const auto& s : sessions_) {
    out.push_back({s->id, s->slot, s->spec_id, s->phase.load()});
  }
  return out;
}

std::size_t Server::active_sessions() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& s : sessions_) n += s->done ? 0 : 1;
  return n;
}

std::unique_ptr<Server> serve(const net::Endpoint& bind, EngineConfig config) {
  return std::make_unique<Server>(bind, std::move(config));
}

// ---------------------------------------------------------------------------

ServiceClient::ServiceClient(const net::Endpoint& endpoint)
    : socket_(net::Socket::connect(endpoint)) {}

void ServiceClient::send(const StreamFrame& frame) { net::send_frame(socket_, frame); }

std::optional<StreamFrame> ServiceClient::receive() { return net::recv_frame(socket_); }

std::uint8_t ServiceClient::configure(std::string_view description) {
  send(make_text_frame(FrameType::kConfig, 0, kHandshakeSequence, description));
  auto reply = receive();
  if (!reply) throw ProtocolError("server closed the connection during CONFIG");
  if (reply->header.type == FrameType::kError) {
    if (reply->text().starts_with(kBusyTag)) throw BusyError(std::string(reply->text()));
    throw ProtocolError("server rejected CONFIG: " + std::string(reply->text()));
  }
  if (reply->header.type != FrameType::kAck) {
    throw ProtocolError("expected ACK, got " + std::string(to_string(reply->header.type)));
  }
  slot_ = reply->header.slot_id;
  configured_ = true;
  return slot_;
}

void ServiceClient::process(ColumnSource& input, ColumnSink& output) {
  if (!configured_) throw ProtocolError("process() before configure()");
  const std::uint8_t slot = slot_;
  std::exception_ptr write_error;
  std::jthread writer([&] {
    try {
      SequenceCounter seq;
      std::uint64_t control = client_stream_control_first(slot);
      const auto raw = input.header().encode();
      StreamFrame schema;
      schema.header = {FrameType::kData, slot, kControlColumn,
                       static_cast<std::uint32_t>(raw.size()), control++};
      schema.payload.assign(raw.begin(), raw.end());
      net::send_frame(socket_, schema);
      while (auto f = input.next()) {
        f->header.slot_id = slot;
        f->header.sequence = seq.next(slot, f->header.column_index);
        net::send_frame(socket_, *f);
      }
      net::send_frame(socket_, make_text_frame(FrameType::kEnd, slot, control++, ""));
    } catch (...) {
      write_error = std::current_exception();
    }
  });

  try {
    SocketSource response(socket_, slot, 64, kHandshakeSequence + 1);
    pump(response, output);
  } catch (const std::exception& e) {
    output.abort(e.what());
    socket_.shutdown_both();
    writer.join();
    throw;
  }
  writer.join();
  if (write_error) std::rethrow_exception(write_error);
}

ColumnBatch preprocess_remote(const net::Endpoint& endpoint, std::string_view description,
                              const ColumnBatch& batch) {
  ServiceClient client(endpoint);
  client.configure(description);
  BatchSource source(std::make_shared<const ColumnBatch>(batch));
  BatchSink sink;
  client.process(source, sink);
  return sink.take();
}

}  // namespace minipipe
