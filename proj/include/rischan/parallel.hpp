// SPDX-License-Identifier: Apache-2.0
//
// rischan - RIS channel modelling toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#ifndef RISCHAN_PARALLEL_HPP
#define RISCHAN_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rischan
{
    // Runs fn(i) for i in [0, count) on a small thread pool. Work items must
    // write only to their own output slot; the result is then independent of
    // the schedule. The first exception thrown by any item is rethrown.
    template <typename Fn>
    void parallel_for(std::size_t count, Fn &&fn, std::size_t max_threads = 0)
    {
        std::size_t threads = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
        threads = std::min(threads, count);
        if (threads <= 1)
        {
            for (std::size_t i = 0; i < count; ++i)
                fn(i);
            return;
        }

        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]()
        {
            for (std::size_t i = next++; i < count; i = next++)
            {
                try
                {
                    fn(i);
                }
                catch (...)
                {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    next = count;
                }
            }
        };

        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        pool.clear();
        if (error)
            std::rethrow_exception(error);
    }
}

#endif
