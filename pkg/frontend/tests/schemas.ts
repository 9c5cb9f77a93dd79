/** Mirror of the service's published response schema, shared by suites. */

import { z } from 'zod';

export const responseSchema = z.object({
    schema_version: z.literal(1),
    engine: z.enum(['mechanistic', 'surrogate']),
    graph_id: z.string(),
    horizon: z.union([z.literal(30), z.literal(60), z.literal(90)]),
    n_nodes: z.number().int().min(2),
    latency_ms: z.number().min(0),
    request: z.record(z.unknown()),
    values: z.array(z.array(z.array(z.array(z.number())))),
    input_days: z.array(z.array(z.array(z.array(z.number())))).optional(),
});
