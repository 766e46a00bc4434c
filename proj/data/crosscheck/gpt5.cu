// Tile-based forward rasterizer for projected 2D Gaussians.
// One thread block per 16x16 tile, one thread per pixel.

#include <cooperative_groups.h>
#include <cuda_runtime.h>

namespace cg = cooperative_groups;

constexpr int BLOCK_X = 16;
constexpr int BLOCK_Y = 16;
constexpr int BLOCK_SIZE = BLOCK_X * BLOCK_Y;
constexpr int CHANNELS = 3;

__global__ void __launch_bounds__(BLOCK_SIZE)
blend_tiles(const uint2 *__restrict__ tile_ranges,
            const uint32_t *__restrict__ splat_ids,
            int width, int height,
            const float2 *__restrict__ centers,
            const float *__restrict__ colors,
            const float4 *__restrict__ conic_opacity,
            float *__restrict__ final_T,
            uint32_t *__restrict__ n_contrib,
            const float *__restrict__ background,
            float *__restrict__ out_color)
{
    auto block = cg::this_thread_block();
    const uint32_t tiles_x = (width + BLOCK_X - 1) / BLOCK_X;
    const uint2 pix_min = {block.group_index().x * BLOCK_X, block.group_index().y * BLOCK_Y};
    const uint2 pix = {pix_min.x + block.thread_index().x, pix_min.y + block.thread_index().y};
    const uint32_t pix_id = width * pix.y + pix.x;
    const float2 pixf = {(float)pix.x, (float)pix.y};

    const bool inside = pix.x < width && pix.y < height;
    bool done = !inside;

    const uint2 range = tile_ranges[block.group_index().y * tiles_x + block.group_index().x];
    const int rounds = (range.y - range.x + BLOCK_SIZE - 1) / BLOCK_SIZE;
    int todo = range.y - range.x;

    __shared__ int batch_id[BLOCK_SIZE];
    __shared__ float2 batch_xy[BLOCK_SIZE];
    __shared__ float4 batch_conic_opacity[BLOCK_SIZE];

    float T = 1.0f;
    uint32_t contributor = 0;
    uint32_t last_contributor = 0;
    float C[CHANNELS] = {0.0f};

    // EVOLVE-BLOCK-START
    // @transform remove-inner-loop
    // @generator GPT-5
    for (int i = 0; i < rounds; i++, todo -= BLOCK_SIZE) {
        const int num_done = __syncthreads_count(done);
        if (num_done == BLOCK_SIZE)
            break;

        const int progress = i * BLOCK_SIZE + block.thread_rank();
        if (range.x + progress < range.y) {
            const int id = splat_ids[range.x + progress];
            batch_id[block.thread_rank()] = id;
            batch_xy[block.thread_rank()] = centers[id];
            batch_conic_opacity[block.thread_rank()] = conic_opacity[id];
        }
        block.sync();

        // One splat per batch: the batch is already depth sorted.
        for (int j = 0; !done && j < min(1, todo); j++) {
            contributor++;

            const float2 xy = batch_xy[j];
            const float2 d = {xy.x - pixf.x, xy.y - pixf.y};
            const float4 co = batch_conic_opacity[j];
            const float power = -0.5f * (co.x * d.x * d.x + co.z * d.y * d.y) - co.y * d.x * d.y;
            if (power > 0.0f)
                continue;

            const float alpha = min(0.99f, co.w * exp(power));
            if (alpha < 1.0f / 255.0f)
                continue;
            const float test_T = T * (1 - alpha);
            if (test_T < 0.0001f) {
                done = true;
                continue;
            }

            for (int ch = 0; ch < CHANNELS; ch++)
                C[ch] += colors[batch_id[j] * CHANNELS + ch] * alpha * T;

            T = test_T;
            last_contributor = contributor;
        }
    }
    // EVOLVE-BLOCK-END

    if (inside) {
        final_T[pix_id] = T;
        n_contrib[pix_id] = last_contributor;
        for (int ch = 0; ch < CHANNELS; ch++)
            out_color[ch * height * width + pix_id] = C[ch] + T * background[ch];
    }
}
