#pragma once

#include <chrono>
#include <cstdint>
#include <thread>
#include <vector>

namespace vsfa {

class Clock {
public:
    virtual ~Clock() = default;
    virtual int64_t now_ms() = 0;
    virtual void sleep_ms(int64_t ms) = 0;
};

class SystemClock final : public Clock {
public:
    int64_t now_ms() override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
    void sleep_ms(int64_t ms) override {
        if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }

    static SystemClock& instance() {
        static SystemClock clock;
        return clock;
    }
};

/// Test clock: sleeping advances virtual time instantly and records the request.
class ManualClock final : public Clock {
public:
    int64_t now_ms() override { return now_; }
    void sleep_ms(int64_t ms) override {
        if (ms > 0) {
            sleeps.push_back(ms);
            now_ += ms;
        }
    }
    void advance(int64_t ms) { now_ += ms; }

    std::vector<int64_t> sleeps;

private:
    int64_t now_ = 0;
};

}  // namespace vsfa
