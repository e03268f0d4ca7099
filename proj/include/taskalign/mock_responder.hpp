#pragma once

// Rule-based stand-in for every model role, keyed by request purpose and
// driven by the structured request context. Deterministic: equal requests get
// equal replies. Used by --mock runs and offline tests.

#include <memory>

#include "taskalign/gateway.hpp"

namespace taskalign {

MockReply synthetic_reply(const ChatRequest& request);

/// Mock backend whose responder is synthetic_reply.
std::shared_ptr<MockChatBackend> make_synthetic_backend();

/// Gateway over mock_endpoints() and the given backend, with no backoff sleep.
Gateway make_mock_gateway(std::shared_ptr<MockChatBackend> backend);

}  // namespace taskalign
